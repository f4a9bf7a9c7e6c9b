"""Occlusion voxel grid: the planner's ternary belief over the shelf interior.

Labels are stored as two arrays: ``occupied`` holds the object id owning a voxel
(-1 otherwise) and ``occluders`` holds a uint64 bitmask of the visible objects
hiding it. A voxel is Occluded iff it is not occupied and its mask is nonzero,
which makes the Free / Occupied / Occluded labels a partition by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .geometry import Prism, RayCache, points_inside, ray_solid
from .scene import ObjectInstance, Stack, Workspace
from .sensor import CameraModel, SenseResult, visible_objects

FREE = "free"
OCCUPIED = "occupied"
OCCLUDED = "occluded"
MAX_OBJECT_ID = 63


class ModelMissing(KeyError):
    """A visible object has no known model."""


def id_mask(ids: Iterable[int]) -> np.uint64:
    m = 0
    for i in ids:
        if not 0 <= i <= MAX_OBJECT_ID:
            raise ValueError(f"object id {i} outside the supported range 0..{MAX_OBJECT_ID}")
        m |= 1 << i
    return np.uint64(m)


def mask_ids(mask) -> frozenset[int]:
    m = int(mask)
    return frozenset(i for i in range(MAX_OBJECT_ID + 1) if m >> i & 1)


def grid_dims(workspace: Workspace, voxel: float) -> tuple[int, int, int]:
    dims = []
    for ext in workspace.size:
        n = round(ext / voxel)
        if n < 1 or abs(n * voxel - ext) > 1e-9:
            raise ValueError(f"voxel size {voxel} does not tile workspace extent {ext}")
        dims.append(n)
    return tuple(dims)


def voxel_centers(workspace: Workspace, voxel: float) -> np.ndarray:
    nx, ny, nz = grid_dims(workspace, voxel)
    axes = [workspace.lo[a] + (np.arange(n) + 0.5) * voxel for a, n in enumerate((nx, ny, nz))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: tuple[float, float, float]
    voxel: float
    dims: tuple[int, int, int]
    occupied: np.ndarray  # int64 (nx, ny, nz), -1 where not occupied
    occluders: np.ndarray  # uint64 (nx, ny, nz) bitmask, zero where occupied or free

    def label(self, i: int, j: int, k: int) -> tuple[str, frozenset[int]]:
        o = int(self.occupied[i, j, k])
        if o >= 0:
            return OCCUPIED, frozenset((o,))
        m = self.occluders[i, j, k]
        if m:
            return OCCLUDED, mask_ids(m)
        return FREE, frozenset()

    @cached_property
    def occluded(self) -> np.ndarray:
        return (self.occupied < 0) & (self.occluders != 0)

    @cached_property
    def _occluded_cum(self) -> np.ndarray:
        """Per-column prefix counts of occluded voxels along z, shape (nx, ny, nz + 1)."""
        c = np.zeros(self.dims[:2] + (self.dims[2] + 1,), dtype=np.int32)
        np.cumsum(self.occluded, axis=2, out=c[:, :, 1:])
        return c

    @cached_property
    def column_xy(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny, _ = self.dims
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.voxel
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.voxel
        return np.meshgrid(xs, ys, indexing="ij")

    def count(self, kind: str) -> int:
        if kind == OCCUPIED:
            return int((self.occupied >= 0).sum())
        if kind == OCCLUDED:
            return int(self.occluded.sum())
        return int(self.occupied.size - (self.occupied >= 0).sum() - self.occluded.sum())

    def prism_cells(self, prism: Prism, tol: float = 1e-9):
        """Columns (bool mask) and layer range [k0, k1) of voxel cubes the box overlaps."""
        v = self.voxel
        z0 = self.origin[2]
        # layers k whose slab [z0 + k v, z0 + (k+1) v] overlaps (prism.z0, prism.z1)
        k0 = max(int(np.floor((prism.z0 - z0) / v + tol)), 0)
        k1 = min(int(np.ceil((prism.z1 - z0) / v - tol)), self.dims[2])
        if k1 <= k0:
            return None
        xs, ys = self.column_xy
        cols = prism.cells_overlapping(xs, ys, v / 2, tol)
        if not cols.any():
            return None
        return cols, k0, k1

    def prism_hits_occluded(self, prism: Prism, tol: float = 1e-9) -> bool:
        """Does the box overlap (positive volume) any Occluded voxel cube?"""
        cells = self.prism_cells(prism, tol)
        if cells is None:
            return False
        cols, k0, k1 = cells
        cum = self._occluded_cum
        return bool(((cum[:, :, k1] - cum[:, :, k0])[cols] > 0).any())


def prism_hits_shadow_of(grid: VoxelGrid, prism: Prism, obj: ObjectInstance, eye,
                         workspace: Workspace, tol: float = 1e-9) -> bool:
    """Would the box overlap a voxel that obj, standing at its pose, hides from eye?

    Used before placing obj: its new position will occlude voxels next to
    itself that the current grid still reports as seen.
    """
    cells = grid.prism_cells(prism, tol)
    if cells is None:
        return False
    cols, k0, k1 = cells
    centers, seg_dir, through_face = _sight(workspace, grid.voxel, np.asarray(eye, float))
    ii, jj = np.nonzero(cols)
    c = centers[ii, jj, k0:k1]
    d = seg_dir[ii, jj, k0:k1]
    face = through_face[ii, jj, k0:k1]
    p = obj.pose
    inside = points_inside(c, obj.shape, p.x, p.y, p.z, p.yaw)
    t = ray_solid(np.asarray(eye, float), d, obj.shape, p.x, p.y, p.z, p.yaw)
    return bool((face & (t < 1.0) & ~inside).any())


def _sight_lines(workspace: Workspace, voxel_size: float, eye: np.ndarray):
    centers = voxel_centers(workspace, voxel_size)
    seg_dir = centers - eye
    # centres whose sight line passes a wall instead of the open face stay Free
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (workspace.lo[1] - eye[1]) / seg_dir[..., 1]
        px = eye[0] + s * seg_dir[..., 0]
        pz = eye[2] + s * seg_dir[..., 2]
    through_face = ((eye[1] < workspace.lo[1]) & (s > 0) & (s < 1)
                    & (px >= workspace.lo[0]) & (px <= workspace.hi[0])
                    & (pz >= workspace.lo[2]) & (pz <= workspace.hi[2]))
    return centers, seg_dir, through_face


_VOXEL_HITS = RayCache(128)


def _sight(workspace: Workspace, voxel_size: float, eye: np.ndarray):
    key = (tuple(workspace.lo), tuple(workspace.hi), voxel_size, tuple(eye))
    return _VOXEL_HITS.get(key, lambda: _sight_lines(workspace, voxel_size, eye))


def update_voxels_from_image(sense: SenseResult, camera: CameraModel,
                             known_models: Mapping[int, ObjectInstance],
                             workspace: Workspace, voxel_size: float = 0.01) -> VoxelGrid:
    """Label voxels from what the camera saw and the models of the visible objects."""
    visible = sorted(visible_objects(sense))
    missing = [i for i in visible if i not in known_models]
    if missing:
        raise ModelMissing(f"no model for visible objects {missing}")
    eye = camera.eye
    ws_key = (tuple(workspace.lo), tuple(workspace.hi), voxel_size, tuple(eye))
    centers, seg_dir, through_face = _sight(workspace, voxel_size, eye)
    dims = centers.shape[:3]
    occupied = np.full(dims, -1, dtype=np.int64)
    occluders = np.zeros(dims, dtype=np.uint64)
    for oid in visible:
        obj = known_models[oid]
        p = obj.pose

        def cast(shape=obj.shape, p=p):
            inside = points_inside(centers, shape, p.x, p.y, p.z, p.yaw)
            t = ray_solid(eye, seg_dir, shape, p.x, p.y, p.z, p.yaw)
            return inside, through_face & (t < 1.0) & ~inside

        inside, blocks = _VOXEL_HITS.get((ws_key, obj.shape, p), cast)
        occupied = np.where(inside & (occupied < 0), oid, occupied)
        occluders |= np.where(blocks, id_mask([oid]), np.uint64(0))
    occluders = np.where(occupied >= 0, np.uint64(0), occluders)
    occupied.setflags(write=False)
    occluders.setflags(write=False)
    return VoxelGrid(tuple(workspace.lo), voxel_size, tuple(dims), occupied, occluders)


def occlusion_volume_by_stack(grid: VoxelGrid, stacks: Iterable[Stack]) -> dict[Stack, float]:
    occ = grid.occluders[grid.occluded]
    cell = grid.voxel ** 3
    return {st: cell * int(((occ & id_mask(st.members)) != 0).sum()) for st in stacks}


def birds_eye_shadow(grid: VoxelGrid, include_occluded: bool = True,
                     ignore: int | None = None) -> np.ndarray:
    """Column-wise projection of blocked voxels, shape (nx, ny).

    ``ignore`` names an object about to be moved: its own Occupied voxels are
    dropped, and so are voxels occluded by it alone inside its own columns.
    """
    occ = grid.occupied >= 0
    blocked_occ = grid.occluded
    if ignore is not None:
        own = grid.occupied == ignore
        own_cols = own.any(axis=2, keepdims=True)
        occ = occ & ~own
        only_self = grid.occluders == id_mask([ignore])
        blocked_occ = blocked_occ & ~(only_self & own_cols)
    blocked = occ | blocked_occ if include_occluded else occ
    return blocked.any(axis=2)


def did_discover_object(prev_visible: Iterable[int], new_visible: Iterable[int]) -> bool:
    return bool(set(new_visible) - set(prev_visible))


def dump_grid(grid: VoxelGrid, fh) -> None:
    """One line per non-Free voxel: ``i j k occupied id`` or ``i j k occluded id...``."""
    fh.write(f"# voxel {grid.voxel!r} dims {grid.dims[0]} {grid.dims[1]} {grid.dims[2]} "
             f"origin {grid.origin[0]!r} {grid.origin[1]!r} {grid.origin[2]!r}\n")
    occ = np.argwhere(grid.occupied >= 0)
    hid = np.argwhere(grid.occluded)
    rows = [(tuple(int(v) for v in ijk), OCCUPIED, (int(grid.occupied[tuple(ijk)]),)) for ijk in occ]
    rows += [(tuple(int(v) for v in ijk), OCCLUDED, tuple(sorted(mask_ids(grid.occluders[tuple(ijk)]))))
             for ijk in hid]
    for (i, j, k), kind, ids in sorted(rows):
        fh.write(f"{i} {j} {k} {kind} {' '.join(map(str, ids))}\n")
