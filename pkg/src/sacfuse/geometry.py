"""Pinhole projection, unprojection and least-squares ray triangulation.

Pixel coordinates are ``(u, v)`` = (column, row) with pixel centers on the
integer grid. A subpixel coordinate lies inside a ``W x H`` raster when
``-0.5 < u < W - 0.5`` and ``-0.5 < v < H - 0.5``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene_io import CameraView

BEHIND_EPS = 1e-9
MAX_CONDITION = 1e8


class DegenerateGeometryError(ValueError):
    """Rays are too few or too close to parallel to triangulate."""


@dataclass(frozen=True, eq=False)
class PointSample:
    """A 3-D point together with the pixel and depth it was read from."""

    position: np.ndarray
    view_id: int
    pixel: tuple[int, int]
    depth: float


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("ray direction must be non-zero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d / n)

    @classmethod
    def through(cls, origin, point) -> "Ray":
        return cls(origin, np.asarray(point, dtype=np.float64) - np.asarray(origin, dtype=np.float64))


def snap(coord):
    """Nearest pixel index, rounding halves away from zero."""
    c = np.asarray(coord, dtype=np.float64)
    return (np.sign(c) * np.floor(np.abs(c) + 0.5)).astype(np.int64)


def in_raster(u, v, width: int, height: int):
    return (u > -0.5) & (u < width - 0.5) & (v > -0.5) & (v < height - 0.5)


def unproject(pixel, depth: float, view: CameraView) -> np.ndarray:
    """World point seen at subpixel ``pixel`` with z-depth ``depth``."""
    u, v = pixel
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}")
    if not in_raster(u, v, view.width, view.height):
        raise ValueError(f"pixel {pixel} outside {view.width}x{view.height} raster")
    return unproject_many(np.array([u], float), np.array([v], float), np.array([depth], float), view)[0]


def unproject_many(u, v, depth, view: CameraView) -> np.ndarray:
    """Vectorized unprojection; returns an (n, 3) array of world points."""
    K = view.intrinsics
    d = np.asarray(depth, dtype=np.float64)
    cam = np.empty((d.size, 3))
    cam[:, 0] = (np.asarray(u, dtype=np.float64) - K.cx) / K.fx * d
    cam[:, 1] = (np.asarray(v, dtype=np.float64) - K.cy) / K.fy * d
    cam[:, 2] = d
    R, t = view.pose.rotation, view.pose.translation
    return (cam - t) @ R


def project(point, view: CameraView):
    """Project a world point; ``None`` if it is behind the camera or off-raster.

    Returns ``((u, v), depth)`` with subpixel ``(u, v)``.
    """
    u, v, z, ok = project_many(np.asarray(point, dtype=np.float64).reshape(1, 3), view)
    if not ok[0]:
        return None
    return (float(u[0]), float(v[0])), float(z[0])


def project_many(points, view: CameraView):
    """Vectorized projection of (n, 3) world points.

    Returns ``(u, v, z, ok)``; entries where ``ok`` is False carry
    meaningless coordinates.
    """
    K = view.intrinsics
    cam = np.asarray(points, dtype=np.float64) @ view.pose.rotation.T + view.pose.translation
    z = cam[:, 2]
    front = z > BEHIND_EPS
    safe = np.where(front, z, 1.0)
    u = K.fx * cam[:, 0] / safe + K.cx
    v = K.fy * cam[:, 1] / safe + K.cy
    ok = front & in_raster(u, v, K.width, K.height)
    return u, v, z, ok


def view_points(view: CameraView):
    """Unproject every valid depth pixel of ``view`` in row-major order.

    Returns ``(rows, cols, depths, positions)``.
    """
    rows, cols = np.nonzero(view.depth.valid)
    depths = view.depth.values[rows, cols]
    return rows, cols, depths, unproject_many(cols, rows, depths, view)


def triangulate_rays(rays: list[Ray], min_rays: int = 2) -> np.ndarray:
    """Point minimizing the summed squared perpendicular distance to ``rays``."""
    need = max(2, min_rays)
    if len(rays) < need:
        raise DegenerateGeometryError(f"need at least {need} rays, got {len(rays)}")
    origins = np.array([r.origin for r in rays])
    directions = np.array([r.direction for r in rays])
    point, ok = triangulate_batch(origins[None], directions[None], np.ones((1, len(rays)), bool))
    if not ok[0]:
        raise DegenerateGeometryError("rays are (nearly) parallel")
    return point[0]


def triangulate_batch(origins, directions, mask):
    """Midpoint triangulation of many ray bundles at once.

    ``origins`` and ``directions`` are (b, k, 3), ``mask`` (b, k) selects the
    rays that take part; directions must be unit length. Returns the (b, 3)
    points and a boolean array flagging well-conditioned bundles.
    """
    d = np.asarray(directions, dtype=np.float64)
    o = np.asarray(origins, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)[..., None, None]
    # I - d d^T projects onto the plane perpendicular to each ray
    proj = np.eye(3) - d[..., :, None] * d[..., None, :]
    proj = proj * m
    A = proj.sum(axis=1)
    b = np.einsum("bkij,bkj->bi", proj, o)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(A)
    ok = np.isfinite(cond) & (cond <= MAX_CONDITION)
    A_safe = np.where(ok[:, None, None], A, np.eye(3))
    points = np.linalg.solve(A_safe, b[..., None])[..., 0]
    return points, ok
