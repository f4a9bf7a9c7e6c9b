"""Ground-truth shelf world: upright objects, workspace box, camera and target."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import TYPE_CHECKING, Iterable

from .geometry import Box, Cylinder, Shape, cross_section, prism_distance, signed_distance_2d

CONTACT_EPS = 1e-4
SUPPORT_TOL = 1e-6
PENETRATION_TOL = 1e-9

if TYPE_CHECKING:
    from .sensor import CameraModel
SCENE_FORMAT_VERSION = 1


class SceneError(ValueError):
    """A scene violates one of its structural invariants."""


class PickBlocked(SceneError):
    pass


class PlaceCollision(SceneError):
    pass


@dataclass(frozen=True)
class Pose:
    """Object centre (m, world frame) and yaw about +z.

    z is the height of the object's centre of mass, so an object resting on the
    table has z = table_z + height / 2.
    """

    x: float
    y: float
    z: float
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose {vals}")
        yaw = math.fmod(self.yaw, 2 * math.pi)
        if yaw < 0:
            yaw += 2 * math.pi
        if yaw >= 2 * math.pi:
            yaw = 0.0
        object.__setattr__(self, "yaw", yaw)


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    shape: Shape
    pose: Pose
    color: str = "gray"

    @property
    def height(self) -> float:
        return self.shape.height

    @property
    def bottom(self) -> float:
        return self.pose.z - self.shape.height / 2

    @property
    def top(self) -> float:
        return self.pose.z + self.shape.height / 2

    @property
    def zrange(self) -> tuple[float, float]:
        return self.bottom, self.top

    def section(self):
        return cross_section(self.shape, self.pose.x, self.pose.y, self.pose.yaw)

    def moved(self, pose: Pose) -> "ObjectInstance":
        return replace(self, pose=pose)


def object_distance(a: ObjectInstance, b: ObjectInstance) -> float:
    return prism_distance(a.section(), a.zrange, b.section(), b.zrange)


@dataclass(frozen=True)
class Workspace:
    """Shelf interior. The camera looks and the arm reaches through the -y face."""

    lo: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hi: tuple[float, float, float] = (0.6, 0.4, 0.4)

    def __post_init__(self):
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"workspace needs positive extent: {self.lo} {self.hi}")

    @property
    def table_z(self) -> float:
        return self.lo[2]

    @property
    def size(self) -> tuple[float, float, float]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def contains(self, obj: ObjectInstance, tol: float = 1e-9) -> bool:
        sec = obj.section()
        if hasattr(sec, "r"):
            xs = (sec.cx - sec.r, sec.cx + sec.r)
            ys = (sec.cy - sec.r, sec.cy + sec.r)
        else:
            xs = (min(p[0] for p in sec.pts), max(p[0] for p in sec.pts))
            ys = (min(p[1] for p in sec.pts), max(p[1] for p in sec.pts))
        return (xs[0] >= self.lo[0] - tol and xs[1] <= self.hi[0] + tol
                and ys[0] >= self.lo[1] - tol and ys[1] <= self.hi[1] + tol
                and obj.bottom >= self.lo[2] - tol and obj.top <= self.hi[2] + tol)


@dataclass(frozen=True)
class BeliefScene:
    """What the planner knows: the visible objects with exact models."""

    objects: tuple[ObjectInstance, ...]
    workspace: Workspace

    def get(self, oid: int) -> ObjectInstance:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def ids(self) -> frozenset[int]:
        return frozenset(o.id for o in self.objects)

    def without(self, oid: int) -> "BeliefScene":
        return BeliefScene(tuple(o for o in self.objects if o.id != oid), self.workspace)

    def with_object(self, obj: ObjectInstance) -> "BeliefScene":
        return BeliefScene(tuple(o for o in self.objects if o.id != obj.id) + (obj,), self.workspace)


@dataclass(frozen=True)
class Scene:
    """Immutable world state; actions return new scenes.

    ``held`` is the object currently in the gripper, outside the arrangement.
    """

    objects: tuple[ObjectInstance, ...]
    workspace: Workspace
    camera: "CameraModel"
    target: int
    held: ObjectInstance | None = None
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(sorted(self.objects, key=lambda o: o.id)))
        if self.validate:
            check_scene(self)

    def get(self, oid: int) -> ObjectInstance:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def all_ids(self) -> set[int]:
        ids = set(self.ids())
        if self.held is not None:
            ids.add(self.held.id)
        return ids

    def belief(self, ids: Iterable[int]) -> BeliefScene:
        keep = set(ids)
        return BeliefScene(tuple(o for o in self.objects if o.id in keep), self.workspace)


def supporters(obj: ObjectInstance, others: Iterable[ObjectInstance]) -> list[ObjectInstance]:
    """Objects whose top face carries obj's bottom face."""
    out = []
    for o in others:
        if o.id == obj.id or abs(o.top - obj.bottom) > SUPPORT_TOL:
            continue
        if signed_distance_2d(o.section(), obj.section()) < -PENETRATION_TOL:
            out.append(o)
    return out


def check_scene(scene: Scene) -> None:
    ids = [o.id for o in scene.objects]
    if scene.held is not None:
        ids.append(scene.held.id)
    if len(ids) != len(set(ids)):
        raise SceneError(f"duplicate object ids: {ids}")
    if scene.target not in ids:
        raise SceneError(f"target {scene.target} not among objects {ids}")
    ws = scene.workspace
    for o in scene.objects:
        if not ws.contains(o):
            raise SceneError(f"object {o.id} leaves the workspace")
        if abs(o.bottom - ws.table_z) > SUPPORT_TOL and len(supporters(o, scene.objects)) != 1:
            raise SceneError(f"object {o.id} is not supported by the table or exactly one object")
    for a, b in combinations(scene.objects, 2):
        if object_distance(a, b) < -PENETRATION_TOL:
            raise SceneError(f"objects {a.id} and {b.id} interpenetrate")


def contacts(scene: Scene | BeliefScene, eps: float = CONTACT_EPS) -> set[frozenset[int]]:
    return {frozenset((a.id, b.id)) for a, b in combinations(scene.objects, 2)
            if object_distance(a, b) <= eps}


def below_pairs(scene: Scene | BeliefScene, eps: float = CONTACT_EPS) -> list[tuple[int, int]]:
    """(x, y) pairs with x touching y and x's centre of mass lower than y's."""
    by_id = {o.id: o for o in scene.objects}
    out = []
    for pair in contacts(scene, eps):
        a, b = sorted(pair)
        oa, ob = by_id[a], by_id[b]
        if oa.pose.z < ob.pose.z:
            out.append((a, b))
        elif ob.pose.z < oa.pose.z:
            out.append((b, a))
    return sorted(out)


@dataclass(frozen=True)
class Stack:
    base: int
    members: frozenset[int]


def stacks(scene: Scene | BeliefScene) -> list[Stack]:
    """Partition objects into groups connected by the below relation."""
    parent = {o.id: o.id for o in scene.objects}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for x, y in below_pairs(scene):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)
    groups: dict[int, set[int]] = {}
    for oid in parent:
        groups.setdefault(find(oid), set()).add(oid)
    by_id = {o.id: o for o in scene.objects}
    out = []
    for members in groups.values():
        table = sorted(m for m in members
                       if abs(by_id[m].bottom - scene.workspace.table_z) <= SUPPORT_TOL)
        base = table[0] if table else min(members, key=lambda m: (by_id[m].pose.z, m))
        out.append(Stack(base, frozenset(members)))
    return sorted(out, key=lambda s: s.base)


def resting_on(scene: Scene, oid: int) -> list[int]:
    obj = scene.get(oid)
    return [o.id for o in scene.objects
            if o.id != oid and obj in supporters(o, scene.objects)]


def apply_pick(scene: Scene, oid: int) -> Scene:
    if scene.held is not None:
        raise PickBlocked(f"gripper already holds object {scene.held.id}")
    obj = scene.get(oid)
    above = resting_on(scene, oid)
    if above:
        raise PickBlocked(f"objects {above} rest on object {oid}")
    rest = tuple(o for o in scene.objects if o.id != oid)
    return Scene(rest, scene.workspace, scene.camera, scene.target, held=obj)


def apply_place(scene: Scene, oid: int, pose: Pose) -> Scene:
    if scene.held is None or scene.held.id != oid:
        raise PlaceCollision(f"object {oid} is not held")
    obj = scene.held
    pose = Pose(pose.x, pose.y, scene.workspace.table_z + obj.height / 2, pose.yaw)
    try:
        return Scene(scene.objects + (obj.moved(pose),), scene.workspace, scene.camera,
                     scene.target, held=None)
    except SceneError as exc:
        raise PlaceCollision(str(exc)) from exc


def apply_restore(scene: Scene, oid: int, pose: Pose) -> Scene:
    """Put the held object back at an arbitrary pose (used to undo a pick exactly)."""
    if scene.held is None or scene.held.id != oid:
        raise PlaceCollision(f"object {oid} is not held")
    try:
        return Scene(scene.objects + (scene.held.moved(pose),), scene.workspace, scene.camera,
                     scene.target, held=None)
    except SceneError as exc:
        raise PlaceCollision(str(exc)) from exc


# ---------------------------------------------------------------------------
# Scene files: JSON, floats written with repr so load(save(s)) is bit exact.


def _shape_to_dict(shape: Shape) -> dict:
    if isinstance(shape, Cylinder):
        return {"type": "cylinder", "radius": shape.radius, "height": shape.height}
    return {"type": "box", "dx": shape.dx, "dy": shape.dy, "dz": shape.dz}


def _shape_from_dict(d: dict) -> Shape:
    if d["type"] == "cylinder":
        return Cylinder(float(d["radius"]), float(d["height"]))
    if d["type"] == "box":
        return Box(float(d["dx"]), float(d["dy"]), float(d["dz"]))
    raise SceneError(f"unknown shape type {d['type']!r}")


def _obj_to_dict(o: ObjectInstance) -> dict:
    p = o.pose
    return {"id": o.id, "color": o.color, "shape": _shape_to_dict(o.shape),
            "pose": {"x": p.x, "y": p.y, "z": p.z, "yaw": p.yaw}}


def _obj_from_dict(d: dict) -> ObjectInstance:
    p = d["pose"]
    return ObjectInstance(int(d["id"]), _shape_from_dict(d["shape"]),
                          Pose(float(p["x"]), float(p["y"]), float(p["z"]), float(p["yaw"])),
                          str(d.get("color", "gray")))


def scene_to_dict(scene: Scene) -> dict:
    cam = scene.camera
    return {
        "format": "shelf-scene",
        "version": SCENE_FORMAT_VERSION,
        "workspace": {"lo": list(scene.workspace.lo), "hi": list(scene.workspace.hi)},
        "camera": cam.to_dict(),
        "target": scene.target,
        "objects": [_obj_to_dict(o) for o in scene.objects],
        "held": None if scene.held is None else _obj_to_dict(scene.held),
    }


def scene_from_dict(d: dict) -> Scene:
    from .sensor import CameraModel

    if d.get("format") != "shelf-scene":
        raise SceneError("not a shelf-scene document")
    if d.get("version") != SCENE_FORMAT_VERSION:
        raise SceneError(f"unsupported scene version {d.get('version')!r}")
    try:
        ws = Workspace(tuple(float(v) for v in d["workspace"]["lo"]),
                       tuple(float(v) for v in d["workspace"]["hi"]))
        held = d.get("held")
        return Scene(tuple(_obj_from_dict(o) for o in d["objects"]), ws,
                     CameraModel.from_dict(d["camera"]), int(d["target"]),
                     held=None if held is None else _obj_from_dict(held))
    except (KeyError, TypeError) as exc:
        raise SceneError(f"malformed scene document: {exc}") from exc


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=1)
        f.write("\n")


def load_scene(path) -> Scene:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: {exc}") from exc
    return scene_from_dict(data)
