"""Analytic ray-cast RGB-D + segmentation camera."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RayCache, ray_solid

BACKGROUND = -1


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera. ``rotation`` maps camera axes (x right, y down, z forward) to world."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    position: tuple[float, float, float]
    rotation: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image must have at least one pixel")

    @classmethod
    def look_at(cls, eye, target, width=160, height=120, hfov_deg=80.0) -> "CameraModel":
        f = np.asarray(target, float) - np.asarray(eye, float)
        f /= np.linalg.norm(f)
        right = np.cross(f, [0.0, 0.0, 1.0])
        right /= np.linalg.norm(right)
        down = np.cross(f, right)
        rot = np.stack([right, down, f], axis=1)
        fx = (width / 2) / math.tan(math.radians(hfov_deg) / 2)
        return cls(fx, fx, width / 2, height / 2, width, height,
                   tuple(float(v) for v in eye),
                   tuple(tuple(float(v) for v in row) for row in rot))

    @classmethod
    def default(cls, workspace=None, width=160, height=120) -> "CameraModel":
        """Camera centred in front of the open face, looking slightly down."""
        from .scene import Workspace

        ws = workspace or Workspace()
        (x0, y0, z0), (x1, y1, z1) = ws.lo, ws.hi
        eye = ((x0 + x1) / 2, y0 - 0.45, z0 + 0.75 * (z1 - z0))
        target = ((x0 + x1) / 2, (y0 + y1) / 2, z0 + 0.2 * (z1 - z0))
        return cls.look_at(eye, target, width, height)

    @property
    def eye(self) -> np.ndarray:
        return np.asarray(self.position, float)

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.rotation, float)

    def pixel_rays(self) -> np.ndarray:
        """Unit world-frame ray directions, shape (height, width, 3); pixel (u, v) centre at (u, v)."""
        return _RAYS.get(self, self._pixel_rays)

    def _pixel_rays(self) -> np.ndarray:
        u = np.arange(self.width, dtype=float)
        v = np.arange(self.height, dtype=float)
        uu, vv = np.meshgrid(u, v)
        d = np.stack([(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)], -1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ self.R.T

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points -> (u, v, forward depth)."""
        pc = (pts - self.eye) @ self.R
        z = pc[..., 2]
        return self.fx * pc[..., 0] / z + self.cx, self.fy * pc[..., 1] / z + self.cy, z

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "position": list(self.position), "rotation": [list(r) for r in self.rotation]}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]),
                   tuple(float(v) for v in d["position"]),
                   tuple(tuple(float(v) for v in r) for r in d["rotation"]))


@dataclass(frozen=True)
class SenseResult:
    depth: np.ndarray  # (height, width) ray distance in m, inf where the ray leaves the shelf
    seg: np.ndarray  # (height, width) object id or BACKGROUND


def workspace_ray_exit(o: np.ndarray, d: np.ndarray, workspace) -> np.ndarray:
    """Distance to the shelf wall hit by each ray entering through the open -y face; inf otherwise."""
    lo, hi = np.asarray(workspace.lo), np.asarray(workspace.hi)
    dy = d[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_face = (lo[1] - o[..., 1]) / dy
        px = o[..., 0] + t_face * d[..., 0]
        pz = o[..., 2] + t_face * d[..., 2]
        enters = (dy > 0) & (t_face > 0) & (px >= lo[0]) & (px <= hi[0]) & (pz >= lo[2]) & (pz <= hi[2])
        far = np.full(d.shape[:-1], np.inf)
        for ax in range(3):
            t1 = (lo[ax] - o[..., ax]) / d[..., ax]
            t2 = (hi[ax] - o[..., ax]) / d[..., ax]
            far = np.minimum(far, np.where(d[..., ax] == 0, np.inf, np.maximum(t1, t2)))
    return np.where(enters, far, np.inf)


_PIXEL_HITS = RayCache()
_RAYS = RayCache(8)


def render(scene, camera: CameraModel | None = None) -> SenseResult:
    cam = camera or scene.camera
    d = cam.pixel_rays()
    o = cam.eye
    depth = workspace_ray_exit(o, d, scene.workspace)
    seg = np.full(depth.shape, BACKGROUND, dtype=np.int64)
    inside = np.isfinite(depth)
    for obj in scene.objects:
        p = obj.pose
        t = _PIXEL_HITS.get((cam, obj.shape, p),
                            lambda: ray_solid(o, d, obj.shape, p.x, p.y, p.z, p.yaw))
        closer = inside & (t < depth)
        depth = np.where(closer, t, depth)
        seg = np.where(closer, obj.id, seg)
    depth.setflags(write=False)
    seg.setflags(write=False)
    return SenseResult(depth, seg)


def visible_objects(sense: SenseResult, min_pixels: int = 1) -> frozenset[int]:
    ids, counts = np.unique(sense.seg, return_counts=True)
    return frozenset(int(i) for i, c in zip(ids, counts) if i != BACKGROUND and c >= min_pixels)


def write_pgm(path, depth: np.ndarray) -> None:
    """Depth as 16-bit binary PGM (millimetres, 0 for infinite)."""
    finite = np.isfinite(depth)
    mm = np.where(finite, np.round(depth * 1000), 0).clip(0, 65535).astype(">u2")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(mm.tobytes())


def write_ppm(path, seg: np.ndarray) -> None:
    """Segmentation as binary PPM with a fixed per-id palette; background black."""
    rng = np.random.default_rng(12345)
    palette = rng.integers(40, 256, size=(64, 3), dtype=np.uint8)
    img = np.zeros(seg.shape + (3,), dtype=np.uint8)
    fg = seg >= 0
    img[fg] = palette[seg[fg] % 64]
    h, w = seg.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())
