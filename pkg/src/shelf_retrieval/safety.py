"""Post-hoc safety audit of executed actions.

Deliberately independent of the planner's own collision code: footprints are
handled as shapely polygons and voxels as explicit squares.
"""

from __future__ import annotations

import numpy as np
import shapely
from shapely.geometry import Point, Polygon

from .geometry import Cylinder, Prism
from .occlusion import VoxelGrid, id_mask
from .scene import ObjectInstance

AREA_TOL = 1e-10
Z_TOL = 1e-9


def _solid_polygon(o: ObjectInstance):
    if isinstance(o.shape, Cylinder):
        return Point(o.pose.x, o.pose.y).buffer(o.shape.radius, quad_segs=64)
    return Polygon(o.section().pts)


def _prism_polygon(p: Prism):
    return Polygon(p.polygon().pts)


def swept_hits_objects(prisms: list[Prism], objects, grasped: int) -> list[int]:
    hits = []
    for o in objects:
        if o.id == grasped:
            continue
        poly = _solid_polygon(o)
        for p in prisms:
            if min(p.z1, o.top) - max(p.z0, o.bottom) <= Z_TOL:
                continue
            if _prism_polygon(p).intersection(poly).area > AREA_TOL:
                hits.append(o.id)
                break
    return hits


def swept_hits_occluded(prisms: list[Prism], grid: VoxelGrid) -> int:
    """Number of plan-time Occluded voxels sharing volume with the swept boxes."""
    idx = np.argwhere(grid.occluded)
    if len(idx) == 0:
        return 0
    v = grid.voxel
    lo = np.asarray(grid.origin) + idx * v
    squares = shapely.box(lo[:, 0], lo[:, 1], lo[:, 0] + v, lo[:, 1] + v)
    hit = np.zeros(len(idx), dtype=bool)
    for p in prisms:
        zok = (np.minimum(p.z1, lo[:, 2] + v) - np.maximum(p.z0, lo[:, 2])) > Z_TOL
        if not zok.any():
            continue
        poly = _prism_polygon(p)
        cand = zok & shapely.intersects(squares, poly)
        if cand.any():
            areas = shapely.area(shapely.intersection(squares[cand], poly))
            sub = np.flatnonzero(cand)
            hit[sub[areas > AREA_TOL]] = True
    return int(hit.sum())


def placement_hits_occluded_columns(obj: ObjectInstance, grid: VoxelGrid) -> int:
    """Cells under the placed object (centre rule) whose column held Occluded voxels at plan time.

    Voxels occluded only by the object itself, within its own old columns, are exempt:
    that region is vacated by the move.
    """
    occ = grid.occluded
    own_cols = (grid.occupied == obj.id).any(axis=2, keepdims=True)
    only_self = grid.occluders == id_mask([obj.id])
    blocked = (occ & ~(only_self & own_cols)).any(axis=2)
    poly = _solid_polygon(obj)
    xs, ys = grid.column_xy
    pts = shapely.points(xs.ravel(), ys.ravel())
    under = shapely.covers(poly, pts).reshape(xs.shape)
    return int((under & blocked).sum())
