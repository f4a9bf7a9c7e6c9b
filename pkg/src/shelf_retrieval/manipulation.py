"""Abstract arm: grasp sampling and swept-volume collision checks.

The arm reaches straight in through the shelf's open face. Its swept volume is
a corridor prism from the face to the gripper pose plus the gripper box at
that pose, which stands off the object's surface along the approach.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Prism, extent_along
from .occlusion import VoxelGrid, prism_hits_shadow_of
from .scene import BeliefScene, ObjectInstance, Pose, Workspace

WALL_TOL = 1e-9


@dataclass(frozen=True)
class ArmModel:
    # gripper box half extents: along the approach, across it, vertical
    gripper_half: tuple[float, float, float] = (0.015, 0.04, 0.02)
    corridor_width: float = 0.05
    corridor_height: float = 0.05
    standoff: float = 0.02
    max_approach_deg: float = 90.0
    grasp_jitter: float = 0.0

    def __post_init__(self):
        dims = tuple(self.gripper_half) + (self.corridor_width, self.corridor_height, self.standoff)
        if min(dims) <= 0:
            raise ValueError("arm extents must be positive")
        if not 0 < self.max_approach_deg <= 90:
            raise ValueError("max_approach_deg must lie in (0, 90]")


@dataclass(frozen=True)
class GraspCandidate:
    object: int
    gripper_pose: Pose
    approach: tuple[float, float]
    angle: float  # approach angle from +y (into the shelf), radians

    def __post_init__(self):
        if abs(math.hypot(*self.approach) - 1) > 1e-9:
            raise ValueError("approach must be a unit vector")


class GraspStatus(enum.Enum):
    FREE = "free"
    BLOCKED = "blocked"
    UNSAFE_OCCLUDED = "unsafe_occluded"


@dataclass(frozen=True)
class Feasibility:
    status: GraspStatus
    objects: frozenset[int] = frozenset()
    walls: bool = False  # blocked by the shelf itself

    @property
    def is_free(self) -> bool:
        return self.status is GraspStatus.FREE


FREE = Feasibility(GraspStatus.FREE)


def approach_interval(obj: ObjectInstance, workspace: Workspace, arm: ArmModel) -> tuple[float, float]:
    """Approach angles whose backward ray from the object centre leaves through the open face."""
    depth = obj.pose.y - workspace.lo[1]
    lim = math.radians(arm.max_approach_deg)
    if depth <= 0:
        return -lim, lim
    lo = math.atan((obj.pose.x - workspace.hi[0]) / depth)
    hi = math.atan((obj.pose.x - workspace.lo[0]) / depth)
    return max(lo, -lim), min(hi, lim)


def grasp_height(obj: ObjectInstance, workspace: Workspace, arm: ArmModel) -> float:
    half = max(arm.corridor_height / 2, arm.gripper_half[2])
    return min(max(obj.pose.z, workspace.lo[2] + half), workspace.hi[2] - half)


def sample_grasps(obj: ObjectInstance, n: int, rng: np.random.Generator | None,
                  workspace: Workspace, arm: ArmModel = ArmModel()) -> list[GraspCandidate]:
    """n candidates stratified over the admissible approach interval, ascending angle.

    With ``arm.grasp_jitter`` > 0 each angle is jittered inside its stratum by rng.
    """
    if n < 1:
        raise ValueError("need at least one grasp candidate")
    lo, hi = approach_interval(obj, workspace, arm)
    step = (hi - lo) / n
    zg = grasp_height(obj, workspace, arm)
    out = []
    for k in range(n):
        off = 0.5
        if arm.grasp_jitter > 0 and rng is not None:
            off += arm.grasp_jitter * (rng.random() - 0.5)
        th = lo + (k + off) * step
        ax, ay = math.sin(th), math.cos(th)
        reach = extent_along(obj.shape, obj.pose.yaw, ax, ay) + arm.standoff
        gp = Pose(obj.pose.x - reach * ax, obj.pose.y - reach * ay, zg, math.atan2(ay, ax))
        out.append(GraspCandidate(obj.id, gp, (ax, ay), th))
    return out


def scan_order(cands: Sequence[GraspCandidate]) -> list[GraspCandidate]:
    """Candidates nearest head-on first; ties (mirror angles) take the smaller angle."""
    return sorted(cands, key=lambda c: (round(abs(c.angle), 12), c.angle))


def swept_prisms(obj: ObjectInstance, cand: GraspCandidate, workspace: Workspace,
                 arm: ArmModel) -> list[Prism]:
    """Corridor from the open face to the gripper pose, then the gripper box."""
    ax, ay = cand.approach
    g = cand.gripper_pose
    to_face = (g.y - workspace.lo[1]) / ay
    f = (g.x - to_face * ax, g.y - to_face * ay)
    zg = g.z
    out = []
    if to_face > 0:
        out.append(Prism.between(f, (g.x, g.y), arm.corridor_width / 2,
                                 zg - arm.corridor_height / 2, zg + arm.corridor_height / 2))
    hl, hw, hh = arm.gripper_half
    out.append(Prism(g.x, g.y, math.atan2(ay, ax), hl, hw, zg - hh, zg + hh))
    return out


def prisms_hit_walls(prisms: Iterable[Prism], workspace: Workspace) -> bool:
    lo, hi = workspace.lo, workspace.hi
    for p in prisms:
        if p.z0 < lo[2] - WALL_TOL or p.z1 > hi[2] + WALL_TOL:
            return True
        for x, y in p.polygon().pts:
            if x < lo[0] - WALL_TOL or x > hi[0] + WALL_TOL or y > hi[1] + WALL_TOL:
                return True
    return False


def _bound_radius(o: ObjectInstance) -> float:
    s = o.shape
    return s.radius if hasattr(s, "radius") else math.hypot(s.dx, s.dy) / 2


def grasp_feasibility(cand: GraspCandidate, belief: BeliefScene, grid: VoxelGrid | None,
                      arm: ArmModel = ArmModel(), obj: ObjectInstance | None = None) -> Feasibility:
    """Classify a candidate against the belief.

    ``obj`` overrides the grasped object's model (used to test a hypothetical
    placement); otherwise it is looked up in the belief.
    """
    obj = obj if obj is not None else belief.get(cand.object)
    prisms = swept_prisms(obj, cand, belief.workspace, arm)
    walls = prisms_hit_walls(prisms, belief.workspace)
    hit = set()
    for o in belief.objects:
        if o.id == obj.id:
            continue
        rb = _bound_radius(o)
        for p in prisms:
            if math.hypot(p.cx - o.pose.x, p.cy - o.pose.y) > math.hypot(p.half_len, p.half_wid) + rb:
                continue
            if p.overlaps_solid(o.shape, o.pose.x, o.pose.y, o.pose.z, o.pose.yaw):
                hit.add(o.id)
                break
    if hit or walls:
        return Feasibility(GraspStatus.BLOCKED, frozenset(hit), walls)
    if grid is not None and any(grid.prism_hits_occluded(p) for p in prisms):
        return Feasibility(GraspStatus.UNSAFE_OCCLUDED)
    return FREE


def evaluate_grasps(belief: BeliefScene, grid: VoxelGrid, arm: ArmModel, n_grasps: int,
                    ids: Iterable[int] | None = None) -> dict[int, list[tuple[GraspCandidate, Feasibility]]]:
    """Evaluate candidates per object in scan order, stopping at the first Free one.

    The report for an object with no Free candidate lists all n_grasps results,
    which is what the grasp-blocked-by edge weights are computed from.
    """
    out = {}
    for oid in sorted(belief.ids() if ids is None else ids):
        obj = belief.get(oid)
        rep = []
        for cand in scan_order(sample_grasps(obj, n_grasps, None, belief.workspace, arm)):
            f = grasp_feasibility(cand, belief, grid, arm)
            rep.append((cand, f))
            if f.is_free:
                break
        out[oid] = rep
    return out


def plan_pick(oid: int, belief: BeliefScene, grid: VoxelGrid, arm: ArmModel = ArmModel(),
              n_grasps: int = 16, rng=None, report: Sequence | None = None) -> GraspCandidate | None:
    """First Free candidate in scan order (nearest head-on first), or None."""
    if report is not None:
        for cand, f in report:
            if f.is_free:
                return cand
        return None
    obj = belief.get(oid)
    for cand in scan_order(sample_grasps(obj, n_grasps, rng, belief.workspace, arm)):
        if grasp_feasibility(cand, belief, grid, arm).is_free:
            return cand
    return None


def plan_place(oid: int, pose: Pose, belief: BeliefScene, grid: VoxelGrid,
               arm: ArmModel = ArmModel(), n_grasps: int = 16, rng=None,
               obj: ObjectInstance | None = None, eye=None) -> GraspCandidate | None:
    """plan_pick evaluated with the object hypothetically standing at pose.

    The object is removed from the belief first, so its old location is clear.
    With the camera position ``eye`` given, a candidate must also stay out of
    the voxels the object will hide once it stands at pose, so that it can be
    picked again later.
    """
    base = obj if obj is not None else belief.get(oid)
    moved = base.moved(pose)
    rest = belief.without(oid)
    for cand in scan_order(sample_grasps(moved, n_grasps, rng, belief.workspace, arm)):
        if not grasp_feasibility(cand, rest, grid, arm, obj=moved).is_free:
            continue
        if eye is not None and any(prism_hits_shadow_of(grid, p, moved, eye, belief.workspace)
                                   for p in swept_prisms(moved, cand, belief.workspace, arm)):
            continue
        return cand
    return None
