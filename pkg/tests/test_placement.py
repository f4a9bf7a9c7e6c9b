import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from shelf_retrieval.geometry import Box, Cylinder, cross_section
from shelf_retrieval.occlusion import birds_eye_shadow, update_voxels_from_image
from shelf_retrieval.placement import (anchor_to_pose, clear_of_objects, object_footprint,
                                       sample_placement, valid_placement_cells)
from shelf_retrieval.sensor import render, visible_objects

from helpers import WS, box, cyl, make_scene, shapes
from oracles import valid_anchors_oracle


def _observe(sc, voxel=0.01):
    s = render(sc)
    belief = sc.belief(visible_objects(s))
    grid = update_voxels_from_image(s, sc.camera, {o.id: o for o in belief.objects}, WS, voxel)
    return belief, grid


def test_cylinder_footprint_is_seven_cell_disk():
    fp = object_footprint(Cylinder(0.03, 0.1), 0.0, 0.01, clearance=0.0)
    assert fp.mask.shape == (7, 7)
    assert fp.anchor == (3, 3)
    # analytic point-in-disk per cell centre
    off = np.arange(-3, 4) * 0.01
    ox, oy = np.meshgrid(off, off, indexing="ij")
    assert np.array_equal(fp.mask, ox ** 2 + oy ** 2 <= 0.03 ** 2 + 1e-12)


def test_box_footprint_symmetries():
    b = Box(0.07, 0.03, 0.1)
    m0 = object_footprint(b, 0.0, 0.01, 0.0).mask
    assert np.array_equal(m0, object_footprint(b, math.pi, 0.01, 0.0).mask)
    assert np.array_equal(m0.T, object_footprint(b, math.pi / 2, 0.01, 0.0).mask)


@given(shapes(), st.floats(0, 2 * math.pi))
def test_footprint_is_padded_centre_rule(shape, yaw):
    # a cell is marked iff its centre lies within half a voxel of the shape's projection
    v = 0.01
    fp = object_footprint(shape, yaw, v)
    if isinstance(shape, Cylinder):
        poly = Point(0, 0).buffer(shape.radius, quad_segs=512)
    else:
        poly = Polygon(cross_section(shape, 0.0, 0.0, yaw).pts)
    h, w = fp.mask.shape
    for a in range(-1, h + 1):
        for b in range(-1, w + 1):
            d = poly.distance(Point((a - fp.anchor[0]) * v, (b - fp.anchor[1]) * v))
            marked = 0 <= a < h and 0 <= b < w and fp.mask[a, b]
            if d < v / 2 - 1e-6:
                assert marked
            elif d > v / 2 + 1e-6:
                assert not marked


def test_empty_and_full_shadow():
    fp = object_footprint(Cylinder(0.03, 0.1), 0.0, 0.01, 0.0)
    free = valid_placement_cells(np.zeros((60, 40), bool), fp)
    expect = np.zeros((60, 40), bool)
    expect[3:57, 3:37] = True
    assert np.array_equal(free, expect)
    assert not valid_placement_cells(np.ones((60, 40), bool), fp).any()


@given(st.integers(0, 2 ** 32 - 1), shapes(), st.floats(0, math.pi))
def test_valid_cells_match_exhaustive_scan(seed, shape, yaw):
    rng = np.random.default_rng(seed)
    shadow = rng.random((30, 20)) < rng.uniform(0, 0.1)
    fp = object_footprint(shape, yaw, 0.02)
    got = valid_placement_cells(shadow, fp)
    assert np.array_equal(got, valid_anchors_oracle(shadow, fp.mask, fp.anchor))


def test_lone_object_gets_a_new_pose():
    sc = make_scene([cyl(0, 0.3, 0.1)])
    belief, grid = _observe(sc)
    o = belief.get(0)
    moved = 0
    for seed in range(50):
        res = sample_placement(o, belief, grid, np.random.default_rng(seed))
        assert res is not None
        assert clear_of_objects(o.moved(res.pose), belief.without(0))
        moved += (res.pose.x, res.pose.y) != (o.pose.x, o.pose.y)
    assert moved == 50


def test_packed_shelf_has_no_placement():
    walls = [box(i, 0.05 + 0.1 * i, 0.2, 0.098, 0.398, 0.3) for i in range(6)]
    sc = make_scene(walls)
    belief, grid = _observe(sc)
    res = sample_placement(cyl(9, 0.3, 0.2), belief, grid, np.random.default_rng(0))
    assert res is None


def test_sampled_poses_avoid_shadow_and_stay_reachable():
    sc = make_scene([cyl(0, 0.3, 0.1, r=0.04, h=0.2), box(1, 0.1, 0.3, 0.06, 0.06, 0.1)])
    belief, grid = _observe(sc)
    o = belief.get(0)
    shadow = birds_eye_shadow(grid, True, ignore=0)
    for seed in range(10):
        stats = {}
        res = sample_placement(o, belief, grid, np.random.default_rng(seed), stats=stats)
        assert res is not None and stats["anchors"] >= 1
        i = round((res.pose.x - grid.origin[0]) / grid.voxel - 0.5)
        j = round((res.pose.y - grid.origin[1]) / grid.voxel - 0.5)
        fp = object_footprint(o.shape, res.pose.yaw, grid.voxel)
        assert valid_placement_cells(shadow, fp)[i, j]
        assert anchor_to_pose(grid, i, j, o.height, res.pose.yaw) == res.pose
