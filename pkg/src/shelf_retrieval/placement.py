"""Placement sampling by eroding the bird's-eye free space with the object footprint."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Cylinder, Shape
from .manipulation import ArmModel, GraspCandidate, plan_place
from .occlusion import VoxelGrid, birds_eye_shadow
from .scene import CONTACT_EPS, BeliefScene, ObjectInstance, Pose, object_distance


@dataclass(frozen=True)
class Footprint:
    """Boolean mask of cells covered by the object when centred on the anchor cell."""

    mask: np.ndarray
    anchor: tuple[int, int]


def object_footprint(shape: Shape, yaw: float, voxel: float,
                     clearance: float | None = None) -> Footprint:
    """Cells whose centre lies in the shape's projection grown by clearance (default half a voxel)."""
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if clearance is None:
        clearance = voxel / 2
    reach = (shape.radius if isinstance(shape, Cylinder) else math.hypot(shape.dx, shape.dy) / 2)
    m = int(math.ceil((reach + clearance) / voxel)) + 1
    offs = np.arange(-m, m + 1) * voxel
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    if isinstance(shape, Cylinder):
        mask = ox * ox + oy * oy <= (shape.radius + clearance) ** 2 + 1e-12
    else:
        c, s = math.cos(yaw), math.sin(yaw)
        u = ox * c + oy * s
        v = -ox * s + oy * c
        if clearance > 0:
            # distance from the cell centre to the rectangle
            du = np.maximum(np.abs(u) - shape.dx / 2, 0)
            dv = np.maximum(np.abs(v) - shape.dy / 2, 0)
            mask = du * du + dv * dv <= clearance ** 2 + 1e-12
        else:
            mask = (np.abs(u) <= shape.dx / 2 + 1e-12) & (np.abs(v) <= shape.dy / 2 + 1e-12)
    # point-symmetric about the centre cell, so trimming keeps the anchor central
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    mask = mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    anchor = (m - rows[0], m - cols[0])
    return Footprint(mask, anchor)


def valid_placement_cells(shadow: np.ndarray, fp: Footprint) -> np.ndarray:
    """Anchors where the translated footprint stays on the grid and overlaps no blocked cell."""
    blocked = shadow.astype(np.int32)
    h, w = fp.mask.shape
    # ndimage places the kernel centre at index size // 2; shift so the anchor is the centre
    origin = (fp.anchor[0] - h // 2, fp.anchor[1] - w // 2)
    overlap = ndimage.correlate(blocked, fp.mask.astype(np.int32), mode="constant", cval=1,
                                origin=origin)
    return overlap == 0


def anchor_to_pose(grid: VoxelGrid, i: int, j: int, height: float, yaw: float) -> Pose:
    x = grid.origin[0] + (i + 0.5) * grid.voxel
    y = grid.origin[1] + (j + 0.5) * grid.voxel
    return Pose(x, y, grid.origin[2] + height / 2, yaw)


def yaw_bins_for(shape: Shape, yaw_bins: int) -> list[float]:
    if isinstance(shape, Cylinder):
        return [0.0]
    return [k * math.pi / yaw_bins for k in range(yaw_bins)]


def clear_of_objects(obj: ObjectInstance, belief: BeliefScene, eps: float = CONTACT_EPS) -> bool:
    if not belief.workspace.contains(obj):
        return False
    return all(object_distance(obj, o) > eps for o in belief.objects if o.id != obj.id)


@dataclass
class PlacementResult:
    pose: Pose
    grasp: GraspCandidate
    tries: int


def sample_placement(obj: ObjectInstance, belief: BeliefScene, grid: VoxelGrid,
                     rng: np.random.Generator, arm: ArmModel = ArmModel(), yaw_bins: int = 8,
                     max_place_tries: int = 50, n_grasps: int = 16,
                     shadow: np.ndarray | None = None, stats: dict | None = None,
                     eye=None) -> PlacementResult | None:
    """Random collision-free, discovery-safe placement on the table, or None.

    ``eye`` (camera position) makes the re-grasp check account for the object's
    own future shadow; see plan_place.

    ``shadow`` defaults to the grid's bird's-eye shadow with obj's own voxels removed.
    ``stats`` (if given) accumulates the number of anchors examined under "anchors".
    """
    if shadow is None:
        shadow = birds_eye_shadow(grid, include_occluded=True, ignore=obj.id)
    yaws = yaw_bins_for(obj.shape, yaw_bins)
    order = rng.permutation(len(yaws))
    rest = belief.without(obj.id)
    tries = 0
    for yi in order:
        yaw = yaws[int(yi)]
        fp = object_footprint(obj.shape, yaw, grid.voxel)
        cells = np.argwhere(valid_placement_cells(shadow, fp))
        if len(cells) == 0:
            continue
        pick = rng.permutation(len(cells))[:max_place_tries]
        for ci in pick:
            i, j = (int(v) for v in cells[ci])
            tries += 1
            pose = anchor_to_pose(grid, i, j, obj.height, yaw)
            moved = obj.moved(pose)
            if not clear_of_objects(moved, rest):
                continue
            g = plan_place(obj.id, pose, rest, grid, arm, n_grasps, obj=obj, eye=eye)
            if g is not None:
                if stats is not None:
                    stats["anchors"] = stats.get("anchors", 0) + tries
                return PlacementResult(pose, g, tries)
    if stats is not None:
        stats["anchors"] = stats.get("anchors", 0) + tries
    return None


def footprint_overlap_ok(shadow: np.ndarray, fp: Footprint, i: int, j: int) -> bool:
    """Brute-force check of a single anchor (used for revalidation)."""
    h, w = fp.mask.shape
    for a in range(h):
        for b in range(w):
            if not fp.mask[a, b]:
                continue
            ci, cj = i + a - fp.anchor[0], j + b - fp.anchor[1]
            if not (0 <= ci < shadow.shape[0] and 0 <= cj < shadow.shape[1]) or shadow[ci, cj]:
                return False
    return True
