import math

import numpy as np
import pytest
import shapely
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon

from shelf_retrieval.geometry import (Box, Circle2, Cylinder, Poly2, Prism, cross_section,
                                      extent_along, points_inside, prism_distance, ray_box,
                                      ray_cylinder, ray_solid, rect_polygon, signed_distance_2d)

from helpers import shapes


def _shapely(sec):
    if isinstance(sec, Circle2):
        return Point(sec.cx, sec.cy).buffer(sec.r, quad_segs=256)
    return Polygon(sec.pts)


coords = st.floats(-0.2, 0.2)
yaws = st.floats(0, 2 * math.pi)


def test_shapes_reject_nonpositive_dims():
    with pytest.raises(ValueError):
        Cylinder(0.0, 0.1)
    with pytest.raises(ValueError):
        Box(0.1, -0.1, 0.1)


def test_rect_polygon_is_ccw_with_right_area():
    p = rect_polygon(0.1, 0.2, 0.7, 0.05, 0.02)
    poly = Polygon(p.pts)
    assert poly.exterior.is_ccw
    assert poly.area == pytest.approx(0.1 * 0.04)


@given(shapes(), yaws, st.floats(0, 2 * math.pi))
def test_extent_along_matches_projection(shape, yaw, th):
    ux, uy = math.cos(th), math.sin(th)
    sec = cross_section(shape, 0.0, 0.0, yaw)
    if isinstance(sec, Circle2):
        expect = sec.r
    else:
        expect = max(x * ux + y * uy for x, y in sec.pts)
    assert extent_along(shape, yaw, ux, uy) == pytest.approx(expect, abs=1e-12)


@given(shapes(), coords, coords, yaws, shapes(), coords, coords, yaws)
def test_signed_distance_sign_and_value_against_shapely(sa, xa, ya, ta, sb, xb, yb, tb):
    a = cross_section(sa, xa, ya, ta)
    b = cross_section(sb, xb, yb, tb)
    d = signed_distance_2d(a, b)
    pa, pb = _shapely(a), _shapely(b)
    if d > 1e-4:
        # shapely's buffered circles sit inside the true circles, so distances agree to ~1e-4
        assert pa.distance(pb) == pytest.approx(d, abs=1e-4)
    elif d < -1e-4:
        assert pa.intersection(pb).area > 0
    assert signed_distance_2d(b, a) == pytest.approx(d, abs=1e-12)


def test_signed_distance_simple_cases():
    c1, c2 = Circle2(0, 0, 1), Circle2(3, 0, 1)
    assert signed_distance_2d(c1, c2) == pytest.approx(1.0)
    sq = rect_polygon(0, 0, 0, 1, 1)
    assert signed_distance_2d(sq, Circle2(3, 0, 1)) == pytest.approx(1.0)
    assert signed_distance_2d(sq, rect_polygon(1.5, 0, 0, 1, 1)) == pytest.approx(-0.5)
    assert signed_distance_2d(sq, rect_polygon(3, 3, 0, 1, 1)) == pytest.approx(math.sqrt(2))


def test_prism_distance_vertical_and_diagonal():
    a = Circle2(0, 0, 0.1)
    b = Circle2(0, 0, 0.1)
    assert prism_distance(a, (0, 1), b, (1.5, 2)) == pytest.approx(0.5)
    c = Circle2(0.5, 0, 0.1)
    assert prism_distance(a, (0, 1), c, (1.3, 2)) == pytest.approx(math.hypot(0.3, 0.3))
    assert prism_distance(a, (0, 1), b, (0.9, 2)) == pytest.approx(-0.1)


# -- ray casts ---------------------------------------------------------------


def _march(o, d, shape, x, y, z, yaw, t_max=3.0, n=30001):
    """First sample along the ray inside the solid (brute force)."""
    ts = np.linspace(0, t_max, n)[1:]
    pts = o[None, :] + ts[:, None] * d[None, :]
    inside = points_inside(pts, shape, x, y, z, yaw)
    idx = np.flatnonzero(inside)
    return ts[idx[0]] if len(idx) else math.inf


@given(shapes(), yaws, st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(-0.1, 0.1))
def test_ray_solid_entry_matches_marching(shape, yaw, aimx, aimy, aimz):
    o = np.array([0.0, -0.8, 0.3])
    target = np.array([aimx, aimy, 0.1 + aimz])
    d = target - o
    d /= np.linalg.norm(d)
    z = shape.height / 2
    t = float(ray_solid(o, d, shape, 0.0, 0.0, z, yaw))
    tm = _march(o, d, shape, 0.0, 0.0, z, yaw)
    step = 3.0 / 30000
    if math.isinf(t):
        assert math.isinf(tm)
    else:
        assert t <= tm + 1e-12
        assert tm - t <= step + 1e-9


def test_ray_cylinder_head_on_closed_form():
    o = np.array([0.0, -1.0, 0.05])
    d = np.array([0.0, 1.0, 0.0])
    assert float(ray_cylinder(o, d, 0.0, 0.0, 0.0, 0.1, 0.03)) == pytest.approx(0.97)
    # from above: hits the top cap
    o = np.array([0.0, 0.0, 1.0])
    d = np.array([0.0, 0.0, -1.0])
    assert float(ray_cylinder(o, d, 0.0, 0.0, 0.0, 0.1, 0.03)) == pytest.approx(0.9)
    # behind the origin counts as a miss
    o = np.array([0.0, 1.0, 0.05])
    assert math.isinf(float(ray_cylinder(o, np.array([0.0, 1.0, 0.0]), 0, 0, 0, 0.1, 0.03)))


def test_ray_box_rotated_closed_form():
    o = np.array([0.0, -1.0, 0.05])
    d = np.array([0.0, 1.0, 0.0])
    # square rotated 45 degrees: the ray meets the corner at distance half-diagonal
    t = float(ray_box(o, d, 0.0, 0.0, 0.05, math.pi / 4, 0.05, 0.05, 0.05))
    assert t == pytest.approx(1.0 - 0.05 * math.sqrt(2))


# -- prisms ------------------------------------------------------------------


@given(coords, coords, yaws, st.floats(0.01, 0.1), st.floats(0.01, 0.1), shapes(), coords, coords, yaws)
def test_prism_overlap_agrees_with_shapely(px, py, pa, hl, hw, shape, x, y, yaw):
    p = Prism(px, py, pa, hl, hw, 0.0, 1.0)
    sec = cross_section(shape, x, y, yaw)
    area = Polygon(p.polygon().pts).intersection(_shapely(sec)).area
    got = p.overlaps_solid(shape, x, y, shape.height / 2, yaw)
    if area > 1e-6:
        assert got
    elif area == 0 and isinstance(sec, Poly2):
        assert not got


def test_prism_between_geometry():
    p = Prism.between((0.0, 0.0), (0.0, 0.2), 0.01, 0.0, 0.1)
    assert (p.cx, p.cy) == pytest.approx((0.0, 0.1))
    assert p.half_len == pytest.approx(0.1)
    assert Polygon(p.polygon().pts).area == pytest.approx(0.2 * 0.02)


@given(coords, coords, yaws, st.floats(0.005, 0.1), st.floats(0.005, 0.1))
def test_cells_overlapping_matches_shapely(px, py, pa, hl, hw):
    p = Prism(px, py, pa, hl, hw, 0.0, 1.0)
    v = 0.02
    xs, ys = np.meshgrid(np.arange(-0.3, 0.3, v) + v / 2, np.arange(-0.3, 0.3, v) + v / 2,
                         indexing="ij")
    got = p.cells_overlapping(xs, ys, v / 2)
    squares = shapely.box(xs - v / 2, ys - v / 2, xs + v / 2, ys + v / 2)
    areas = shapely.area(shapely.intersection(squares, Polygon(p.polygon().pts)))
    assert np.all(got[areas > 1e-9])
    assert not np.any(got[areas == 0])


def test_points_inside_box_yaw():
    pts = np.array([[0.04, 0.0, 0.05], [0.0, 0.04, 0.05], [0.0, 0.0, 0.2]])
    inside = points_inside(pts, Box(0.1, 0.02, 0.1), 0.0, 0.0, 0.05, 0.0)
    assert inside.tolist() == [True, False, False]
    inside = points_inside(pts, Box(0.1, 0.02, 0.1), 0.0, 0.0, 0.05, math.pi / 2)
    assert inside.tolist() == [False, True, False]
