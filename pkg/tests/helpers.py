"""Scene builders and hypothesis strategies shared by the tests."""

import math

from hypothesis import strategies as st

from shelf_retrieval.geometry import Box, Cylinder
from shelf_retrieval.scene import ObjectInstance, Pose, Scene, Workspace
from shelf_retrieval.sensor import CameraModel

WS = Workspace()


@st.composite
def shapes(draw):
    if draw(st.booleans()):
        return Cylinder(draw(st.floats(0.015, 0.05)), draw(st.floats(0.05, 0.2)))
    return Box(draw(st.floats(0.03, 0.09)), draw(st.floats(0.03, 0.09)), draw(st.floats(0.05, 0.2)))


@st.composite
def table_objects(draw, oid=0, ws=WS):
    shape = draw(shapes())
    yaw = draw(st.floats(0, 2 * math.pi, exclude_max=True))
    x = draw(st.floats(ws.lo[0] + 0.07, ws.hi[0] - 0.07))
    y = draw(st.floats(ws.lo[1] + 0.07, ws.hi[1] - 0.07))
    return ObjectInstance(oid, shape, Pose(x, y, ws.table_z + shape.height / 2, yaw))


def make_scene(objects, target=0, ws=WS):
    return Scene(tuple(objects), ws, CameraModel.default(ws), target)


def cyl(oid, x, y, r=0.03, h=0.12, z=None, ws=WS):
    z = ws.table_z + h / 2 if z is None else z
    return ObjectInstance(oid, Cylinder(r, h), Pose(x, y, z))


def box(oid, x, y, dx, dy, dz, yaw=0.0, z=None, ws=WS):
    z = ws.table_z + dz / 2 if z is None else z
    return ObjectInstance(oid, Box(dx, dy, dz), Pose(x, y, z, yaw))


class EmptyScene:
    """Duck-typed scene with no objects, for rendering the bare shelf."""

    objects = ()
    workspace = WS
    camera = CameraModel.default(WS)
