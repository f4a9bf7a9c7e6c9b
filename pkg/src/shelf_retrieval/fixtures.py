"""Small hand-built scenes with known outcomes."""

from __future__ import annotations

from .geometry import Box, Cylinder
from .scene import ObjectInstance, Pose, Scene, Workspace
from .sensor import CameraModel

FIXTURES = ("visible-target", "single-occluder", "wedged")


def _scene(objects, target: int, workspace: Workspace | None = None) -> Scene:
    ws = workspace or Workspace()
    return Scene(tuple(objects), ws, CameraModel.default(ws), target)


def visible_target_scene() -> Scene:
    """Lone cylinder near the front: one sense, then retrieve."""
    ws = Workspace()
    return _scene([ObjectInstance(0, Cylinder(0.03, 0.12), Pose(0.3, 0.12, ws.table_z + 0.06), "red")], 0)


def single_occluder_scene() -> Scene:
    """Target at the back left, hidden by one box in front of it.

    Moving the box reveals the target and leaves it graspable.
    """
    ws = Workspace()
    target = ObjectInstance(0, Cylinder(0.025, 0.08), Pose(0.08, 0.33, ws.table_z + 0.04), "red")
    box = ObjectInstance(1, Box(0.08, 0.05, 0.16), Pose(0.11, 0.18, ws.table_z + 0.08), "blue")
    return _scene([target, box], 0)


def wedged_scene() -> Scene:
    """A slot too narrow for the gripper: the front cylinder hides the target and cannot be grasped."""
    ws = Workspace((0.0, 0.0, 0.0), (0.07, 0.3, 0.3))
    front = ObjectInstance(1, Cylinder(0.03, 0.2), Pose(0.035, 0.06, 0.1), "brown")
    target = ObjectInstance(0, Cylinder(0.025, 0.06), Pose(0.035, 0.24, 0.03), "red")
    return _scene([target, front], 0, ws)


def fixture(name: str) -> Scene:
    builders = {"visible-target": visible_target_scene, "single-occluder": single_occluder_scene,
                "wedged": wedged_scene}
    try:
        return builders[name]()
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; expected one of {FIXTURES}") from None
