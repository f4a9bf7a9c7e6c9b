"""Upright-prism geometry: footprints, signed distances, ray casts and swept boxes.

Every solid handled here is a vertical prism: a 2D convex cross-section
(circle or polygon) extruded over a z interval. That is enough for upright
cylinders, yawed boxes and the grasp corridor boxes of the arm model.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float

    def __post_init__(self):
        if not (self.radius > 0 and self.height > 0):
            raise ValueError(f"cylinder dimensions must be positive: {self}")

    @property
    def kind(self) -> str:
        return "cylinder"


@dataclass(frozen=True)
class Box:
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0 and self.dz > 0):
            raise ValueError(f"box dimensions must be positive: {self}")

    @property
    def kind(self) -> str:
        return "box"

    @property
    def height(self) -> float:
        return self.dz


Shape = Cylinder | Box


# ---------------------------------------------------------------------------
# 2D cross-sections


@dataclass(frozen=True)
class Circle2:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class Poly2:
    """Convex polygon, vertices counter-clockwise."""

    pts: tuple[tuple[float, float], ...]


def rect_polygon(cx, cy, yaw, half_u, half_v) -> Poly2:
    """Rectangle centred at (cx, cy) with half extents along the yawed axes."""
    c, s = math.cos(yaw), math.sin(yaw)
    ux, uy = c * half_u, s * half_u
    vx, vy = -s * half_v, c * half_v
    return Poly2((
        (cx - ux - vx, cy - uy - vy),
        (cx + ux - vx, cy + uy - vy),
        (cx + ux + vx, cy + uy + vy),
        (cx - ux + vx, cy - uy + vy),
    ))


def cross_section(shape: Shape, x: float, y: float, yaw: float) -> Circle2 | Poly2:
    if isinstance(shape, Cylinder):
        return Circle2(x, y, shape.radius)
    return rect_polygon(x, y, yaw, shape.dx / 2, shape.dy / 2)


def extent_along(shape: Shape, yaw: float, ux: float, uy: float) -> float:
    """Support-function half width of the footprint along unit direction (ux, uy)."""
    if isinstance(shape, Cylinder):
        return shape.radius
    c, s = math.cos(yaw), math.sin(yaw)
    return abs(ux * c + uy * s) * shape.dx / 2 + abs(-ux * s + uy * c) * shape.dy / 2


def _seg_point_dist(px, py, ax, ay, bx, by) -> float:
    ex, ey = bx - ax, by - ay
    ll = ex * ex + ey * ey
    t = 0.0 if ll == 0 else max(0.0, min(1.0, ((px - ax) * ex + (py - ay) * ey) / ll))
    return math.hypot(px - ax - t * ex, py - ay - t * ey)


def _edges(p: Poly2):
    n = len(p.pts)
    for i in range(n):
        yield p.pts[i], p.pts[(i + 1) % n]


def _point_poly_sd(px, py, p: Poly2) -> float:
    """Signed distance from a point to a convex polygon (negative inside)."""
    inside = True
    worst = -math.inf
    for (ax, ay), (bx, by) in _edges(p):
        ex, ey = bx - ax, by - ay
        ln = math.hypot(ex, ey)
        # outward normal for a ccw polygon
        d = ((px - ax) * ey - (py - ay) * ex) / ln
        worst = max(worst, d)
        if d > 0:
            inside = False
    if inside:
        return worst
    return min(_seg_point_dist(px, py, a[0], a[1], b[0], b[1]) for a, b in _edges(p))


def _poly_overlap_depth(p: Poly2, q: Poly2) -> float:
    """Minimum SAT overlap over all edge normals; <= 0 means separated."""
    best = math.inf
    for poly in (p, q):
        for (ax, ay), (bx, by) in _edges(poly):
            nx, ny = by - ay, -(bx - ax)
            ln = math.hypot(nx, ny)
            nx, ny = nx / ln, ny / ln
            pa = [x * nx + y * ny for x, y in p.pts]
            qa = [x * nx + y * ny for x, y in q.pts]
            best = min(best, min(max(pa), max(qa)) - max(min(pa), min(qa)))
    return best


def signed_distance_2d(a: Circle2 | Poly2, b: Circle2 | Poly2) -> float:
    """Separation between two convex cross-sections; negative = penetration depth."""
    if isinstance(a, Circle2) and isinstance(b, Circle2):
        return math.hypot(a.cx - b.cx, a.cy - b.cy) - a.r - b.r
    if isinstance(a, Circle2):
        return _point_poly_sd(a.cx, a.cy, b) - a.r
    if isinstance(b, Circle2):
        return _point_poly_sd(b.cx, b.cy, a) - b.r
    depth = _poly_overlap_depth(a, b)
    if depth > 0:
        return -depth
    d = math.inf
    for (ax, ay), (bx, by) in _edges(b):
        for px, py in a.pts:
            d = min(d, _seg_point_dist(px, py, ax, ay, bx, by))
    for (ax, ay), (bx, by) in _edges(a):
        for px, py in b.pts:
            d = min(d, _seg_point_dist(px, py, ax, ay, bx, by))
    return d


def prism_distance(sec_a, z_a: tuple[float, float], sec_b, z_b: tuple[float, float]) -> float:
    """Signed distance between two vertical prisms.

    Exact when separated; when interpenetrating returns minus the smaller of the
    horizontal and vertical penetration depths.
    """
    d2 = signed_distance_2d(sec_a, sec_b)
    gz = max(z_a[0], z_b[0]) - min(z_a[1], z_b[1])
    if d2 >= 0 and gz >= 0:
        return math.hypot(d2, gz)
    if d2 >= 0:
        return d2
    if gz >= 0:
        return gz
    return max(d2, gz)


# ---------------------------------------------------------------------------
# Swept boxes


@dataclass(frozen=True)
class Prism:
    """Yawed box: centre (cx, cy), unit axis angle, half length/width, z range."""

    cx: float
    cy: float
    angle: float
    half_len: float
    half_wid: float
    z0: float
    z1: float

    @classmethod
    def between(cls, p0, p1, half_wid, z0, z1) -> "Prism":
        """Box whose centre line runs from 2D point p0 to p1."""
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        ln = math.hypot(dx, dy)
        return cls((p0[0] + p1[0]) / 2, (p0[1] + p1[1]) / 2, math.atan2(dy, dx),
                   ln / 2, half_wid, z0, z1)

    def polygon(self) -> Poly2:
        return rect_polygon(self.cx, self.cy, self.angle, self.half_len, self.half_wid)

    def overlaps_solid(self, shape: Shape, x: float, y: float, z: float, yaw: float,
                       tol: float = 1e-9) -> bool:
        """True when the box and the solid share a region thicker than tol."""
        h = shape.height / 2
        if min(self.z1, z + h) - max(self.z0, z - h) <= tol:
            return False
        return signed_distance_2d(self.polygon(), cross_section(shape, x, y, yaw)) < -tol

    def cells_overlapping(self, xs: np.ndarray, ys: np.ndarray, half: float,
                          tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of axis-aligned squares (centres xs, ys, half side) the box overlaps.

        Exact separating-axis test in 2D with a strictness margin tol.
        """
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = xs - self.cx, ys - self.cy
        ok = np.abs(dx * c + dy * s) < self.half_len + half * (abs(c) + abs(s)) - tol
        ok &= np.abs(-dx * s + dy * c) < self.half_wid + half * (abs(s) + abs(c)) - tol
        ok &= np.abs(dx) < half + self.half_len * abs(c) + self.half_wid * abs(s) - tol
        ok &= np.abs(dy) < half + self.half_len * abs(s) + self.half_wid * abs(c) - tol
        return ok


# ---------------------------------------------------------------------------
# Vectorised ray casts. Rays are o + t d with d not necessarily unit; returned t
# is the entry parameter in units of d (inf on a miss or when t <= 0).


def ray_cylinder(o: np.ndarray, d: np.ndarray, cx, cy, z0, z1, r) -> np.ndarray:
    ox, oy, oz = o[..., 0] - cx, o[..., 1] - cy, o[..., 2]
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    best = np.full(np.broadcast_shapes(ox.shape, dx.shape), np.inf)
    a = dx * dx + dy * dy
    b = 2 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - r * r
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        t_side = (-b - sq) / (2 * a)
        z_side = oz + t_side * dz
        hit = (disc >= 0) & (a > 0) & (t_side > 0) & (z_side >= z0) & (z_side <= z1)
        best = np.where(hit, t_side, best)
        for zc in (z0, z1):
            tc = (zc - oz) / dz
            px, py = ox + tc * dx, oy + tc * dy
            hit = (dz != 0) & (tc > 0) & (px * px + py * py <= r * r)
            best = np.where(hit & (tc < best), tc, best)
    return best


def ray_box(o: np.ndarray, d: np.ndarray, cx, cy, cz, yaw, hx, hy, hz) -> np.ndarray:
    c, s = math.cos(-yaw), math.sin(-yaw)
    rx, ry = o[..., 0] - cx, o[..., 1] - cy
    lo = np.stack(np.broadcast_arrays(rx * c - ry * s, rx * s + ry * c, o[..., 2] - cz), -1)
    ld = np.stack(np.broadcast_arrays(d[..., 0] * c - d[..., 1] * s,
                                      d[..., 0] * s + d[..., 1] * c, d[..., 2]), -1)
    half = np.array([hx, hy, hz])
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        t1 = (-half - lo) / ld
        t2 = (half - lo) / ld
        tmin = np.where(ld == 0, np.where(np.abs(lo) <= half, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(ld == 0, np.where(np.abs(lo) <= half, np.inf, -np.inf), np.maximum(t1, t2))
    tn = tmin.max(axis=-1)
    tf = tmax.min(axis=-1)
    return np.where((tn <= tf) & (tn > 0), tn, np.inf)


def ray_solid(o, d, shape: Shape, x, y, z, yaw) -> np.ndarray:
    h = shape.height / 2
    if isinstance(shape, Cylinder):
        return ray_cylinder(o, d, x, y, z - h, z + h, shape.radius)
    return ray_box(o, d, x, y, z, yaw, shape.dx / 2, shape.dy / 2, h)


class RayCache:
    """Small LRU of per-solid ray-cast results for a fixed ray bundle.

    Keys must capture everything the result depends on; values are made read-only.
    """

    def __init__(self, size: int = 256):
        self.size = size
        self._d: OrderedDict = OrderedDict()

    def get(self, key, compute):
        val = self._d.get(key)
        if val is None:
            val = compute()
            if isinstance(val, tuple):
                for a in val:
                    a.setflags(write=False)
            else:
                val.setflags(write=False)
            self._d[key] = val
            if len(self._d) > self.size:
                self._d.popitem(last=False)
        else:
            self._d.move_to_end(key)
        return val


def points_inside(p: np.ndarray, shape: Shape, x, y, z, yaw) -> np.ndarray:
    """Closed point-membership test for an array of 3D points."""
    h = shape.height / 2
    rx, ry, rz = p[..., 0] - x, p[..., 1] - y, p[..., 2] - z
    inz = np.abs(rz) <= h
    if isinstance(shape, Cylinder):
        return inz & (rx * rx + ry * ry <= shape.radius ** 2)
    c, s = math.cos(yaw), math.sin(yaw)
    u = rx * c + ry * s
    v = -rx * s + ry * c
    return inz & (np.abs(u) <= shape.dx / 2) & (np.abs(v) <= shape.dy / 2)
