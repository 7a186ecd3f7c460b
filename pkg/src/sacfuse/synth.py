"""Synthetic scenes with exact ground truth.

Depth rasters are rendered by exact ray/surface intersection and then
corrupted per view with an additive bias, Gaussian noise and outliers:

    depth = true_depth + bias[view] + sigma * N(0, 1)
    depth = depth +/- outlier_magnitude    (for a fraction of pixels)

Random numbers come from one independent stream per (seed, view, pixel),
so rendering order never changes the rasters. A stream is seeded by
chaining SplitMix64 over seed, view and pixel index and then advanced with
xorshift64*::

    x ^= x >> 12; x ^= x << 25; x ^= x >> 27; out = x * 0x2545F4914F6CDD1D

Each draw is turned into a double as ``(out >> 11) * 2**-53``. Per pixel
four draws are taken in this order: two for a Box-Muller normal
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``, one for the outlier test
``u3 < outlier_fraction``, one for the outlier sign (``u4 < 0.5`` means
negative).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .geometry import project_many
from .scene_io import CameraIntrinsics, CameraView, DepthMap, PointCloud, Pose

SURFACES = ("plane", "sphere", "step_roof")
LAYOUTS = ("ring", "strip")

_U64 = np.uint64
_MASK = (1 << 64) - 1


class RayMissError(ValueError):
    """The pixel ray does not meet the surface."""


@dataclass(frozen=True)
class SceneSpec:
    surface: str = "plane"
    plane_z: float = 10.0
    sphere_center: tuple[float, float, float] = (0.0, 0.0, 10.0)
    sphere_radius: float = 2.0
    roof_base_z: float = 10.0
    roof_heights: tuple[float, ...] = (2.0, 3.5, 2.0)
    roof_widths: tuple[float, ...] = (2.0, 2.0, 2.0)
    camera_count: int = 5
    layout: str = "ring"
    ring_radius: float = 1.0
    ring_height: float = 0.0
    baseline: float = 4.0
    target: tuple[float, float, float] = (0.0, 0.0, 10.0)
    width: int = 200
    height: int = 150
    fx: float = 200.0
    fy: float = 200.0
    cx: float | None = None
    cy: float | None = None
    per_view_bias: tuple[float, ...] = ()
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_magnitude: float = 1.0
    seed: int = 0
    reference_density: float = 4.0

    def __post_init__(self):
        for name in ("sphere_center", "target", "roof_heights", "roof_widths", "per_view_bias"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if self.surface not in SURFACES:
            raise ValueError(f"surface must be one of {SURFACES}, got {self.surface!r}")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.camera_count < 1:
            raise ValueError("camera_count must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if self.per_view_bias and len(self.per_view_bias) != self.camera_count:
            raise ValueError(
                f"per_view_bias has {len(self.per_view_bias)} entries for {self.camera_count} cameras"
            )
        if len(self.roof_heights) != len(self.roof_widths):
            raise ValueError("roof_heights and roof_widths must have equal length")
        if self.sphere_radius <= 0 or self.reference_density <= 0:
            raise ValueError("sphere_radius and reference_density must be positive")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        cx = (self.width - 1) / 2 if self.cx is None else self.cx
        cy = (self.height - 1) / 2 if self.cy is None else self.cy
        return CameraIntrinsics(self.fx, self.fy, cx, cy, self.width, self.height)

    def bias(self, view_id: int) -> float:
        return self.per_view_bias[view_id] if self.per_view_bias else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def scene_spec_from_dict(data: dict) -> SceneSpec:
    known = {f.name for f in fields(SceneSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown scene key(s): {', '.join(unknown)}")
    return SceneSpec(**data)


def load_scene_spec(path) -> SceneSpec:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: scene spec must be a JSON object")
    return scene_spec_from_dict(data)


# ---------------------------------------------------------------------------
# cameras


def look_at(center, target) -> Pose:
    """World-to-camera pose with +z toward ``target`` and image rows along world +y."""
    c = np.asarray(center, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - c
    f /= np.linalg.norm(f)
    down = np.array([0.0, 1.0, 0.0])
    if abs(f @ down) > 1 - 1e-9:
        down = np.array([0.0, 0.0, 1.0])
    x = np.cross(down, f)
    x /= np.linalg.norm(x)
    y = np.cross(f, x)
    R = np.stack([x, y, f])
    return Pose(R, -R @ c)


def camera_poses(spec: SceneSpec) -> list[Pose]:
    tx, ty, _ = spec.target
    poses = []
    for k in range(spec.camera_count):
        if spec.layout == "ring":
            a = 2 * math.pi * k / spec.camera_count
            c = (tx + spec.ring_radius * math.cos(a), ty + spec.ring_radius * math.sin(a), spec.ring_height)
            poses.append(look_at(c, spec.target))
        else:
            c = np.array([tx + (k - (spec.camera_count - 1) / 2) * spec.baseline, ty, spec.ring_height])
            poses.append(Pose(np.eye(3), -c))
    return poses


# ---------------------------------------------------------------------------
# surfaces


def _roof_layout(spec: SceneSpec):
    widths = np.asarray(spec.roof_widths)
    left = spec.target[0] - widths.sum() / 2
    edges = left + np.concatenate([[0.0], np.cumsum(widths)])
    levels = spec.roof_base_z - np.asarray(spec.roof_heights)
    return edges, levels


def _roof_level(spec: SceneSpec, x):
    edges, levels = _roof_layout(spec)
    k = np.searchsorted(edges, x, side="right") - 1
    inside = (k >= 0) & (k < len(levels))
    return np.where(inside, levels[np.clip(k, 0, len(levels) - 1)], spec.roof_base_z)


def intersect(spec: SceneSpec, origins, directions) -> np.ndarray:
    """Smallest positive ray parameter of the first surface hit; ``inf`` on a miss.

    Directions need not be unit length; the parameter is in units of them.
    """
    o = np.broadcast_to(np.asarray(origins, dtype=np.float64), np.shape(directions))
    d = np.asarray(directions, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.surface == "plane":
            t = (spec.plane_z - o[:, 2]) / d[:, 2]
            return np.where(np.isfinite(t) & (t > 0), t, np.inf)
        if spec.surface == "sphere":
            oc = o - np.asarray(spec.sphere_center)
            a = (d * d).sum(1)
            b = (d * oc).sum(1)
            c = (oc * oc).sum(1) - spec.sphere_radius**2
            disc = b * b - a * c
            # grazing rays count as misses
            hit = disc > 1e-12 * b * b
            root = np.sqrt(np.where(hit, disc, 0.0))
            t1, t2 = (-b - root) / a, (-b + root) / a
            t = np.where(t1 > 0, t1, np.where(t2 > 0, t2, np.inf))
            return np.where(hit, t, np.inf)
        edges, levels = _roof_layout(spec)
        best = np.full(len(d), np.inf)
        zs = np.concatenate([[spec.roof_base_z], levels])
        for z in np.unique(zs):
            t = (z - o[:, 2]) / d[:, 2]
            x = o[:, 0] + t * d[:, 0]
            ok = np.isfinite(t) & (t > 0) & np.isclose(_roof_level(spec, x), z, rtol=0, atol=1e-12)
            best = np.where(ok & (t < best), t, best)
        padded = np.concatenate([[spec.roof_base_z], levels, [spec.roof_base_z]])
        for i, xe in enumerate(edges):
            lo, hi = sorted((padded[i], padded[i + 1]))
            if hi - lo <= 0:
                continue
            t = (xe - o[:, 0]) / d[:, 0]
            z = o[:, 2] + t * d[:, 2]
            ok = np.isfinite(t) & (t > 0) & (z >= lo) & (z <= hi)
            best = np.where(ok & (t < best), t, best)
        return best


def surface_distance(spec: SceneSpec, points) -> np.ndarray:
    """Exact Euclidean distance from each point to the analytic surface."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if spec.surface == "plane":
        return np.abs(p[:, 2] - spec.plane_z)
    if spec.surface == "sphere":
        return np.abs(np.linalg.norm(p - np.asarray(spec.sphere_center), axis=1) - spec.sphere_radius)
    # the roof is a polyline in the x-z plane extruded along y
    edges, levels = _roof_layout(spec)
    base = spec.roof_base_z
    verts = [(-np.inf, base)]
    for i, xe in enumerate(edges):
        verts.append((xe, base if i == 0 else levels[i - 1]))
        verts.append((xe, levels[i] if i < len(levels) else base))
    verts.append((np.inf, base))
    x, z = p[:, 0], p[:, 2]
    best = np.full(len(p), np.inf)
    for (x0, z0), (x1, z1) in zip(verts[:-1], verts[1:]):
        if z0 == z1:
            lo, hi = min(x0, x1), max(x0, x1)
            dx = np.maximum(0.0, np.maximum(lo - x, x - hi))
            d = np.hypot(dx, z - z0)
        else:
            lo, hi = min(z0, z1), max(z0, z1)
            dz = np.maximum(0.0, np.maximum(lo - z, z - hi))
            d = np.hypot(x - x0, dz)
        best = np.minimum(best, d)
    return best


def _pixel_rays(pose: Pose, K: CameraIntrinsics, u, v):
    """Ray directions with unit camera-z, so the hit parameter is z-depth."""
    cam = np.stack([(np.asarray(u, float) - K.cx) / K.fx, (np.asarray(v, float) - K.cy) / K.fy,
                    np.ones(np.shape(u))], axis=-1)
    return cam @ pose.rotation


def perfect_depth_oracle(spec: SceneSpec, view_id: int, pixel) -> float:
    """Noise-free, bias-free z-depth of ``pixel`` in camera ``view_id``."""
    pose = camera_poses(spec)[view_id]
    K = spec.intrinsics
    u, v = pixel
    if not (-0.5 < u < K.width - 0.5 and -0.5 < v < K.height - 0.5):
        raise ValueError(f"pixel {pixel} outside the raster")
    d = _pixel_rays(pose, K, np.array([u]), np.array([v]))
    t = intersect(spec, pose.center[None], d)[0]
    if not np.isfinite(t):
        raise RayMissError(f"view {view_id} pixel {pixel} misses the {spec.surface}")
    return float(t)


# ---------------------------------------------------------------------------
# random streams


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + _U64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
    return x ^ (x >> _U64(31))


def _xorshift64star(state: np.ndarray):
    x = state ^ (state >> _U64(12))
    x = x ^ (x << _U64(25))
    x = x ^ (x >> _U64(27))
    return x, x * _U64(0x2545F4914F6CDD1D)


def pixel_uniforms(seed: int, view_id: int, n_pixels: int, draws: int) -> np.ndarray:
    """(draws, n_pixels) uniforms in [0, 1) from per-pixel streams."""
    with np.errstate(over="ignore"):
        base = _splitmix64(np.array([seed & _MASK], dtype=_U64))
        base = _splitmix64(base ^ _U64(view_id & _MASK))
        state = _splitmix64(base ^ np.arange(n_pixels, dtype=_U64))
        state = np.where(state == 0, _U64(1), state)
        out = np.empty((draws, n_pixels))
        for i in range(draws):
            state, r = _xorshift64star(state)
            out[i] = (r >> _U64(11)).astype(np.float64) * 2.0**-53
    return out


# ---------------------------------------------------------------------------
# rendering


def render_true_depth(spec: SceneSpec, pose: Pose) -> np.ndarray:
    K = spec.intrinsics
    v, u = np.mgrid[0 : K.height, 0 : K.width]
    d = _pixel_rays(pose, K, u.ravel(), v.ravel())
    t = intersect(spec, pose.center[None], d)
    return t.reshape(K.height, K.width)


def generate_scene(spec: SceneSpec) -> tuple[list[CameraView], PointCloud]:
    """Rendered views and a dense reference cloud of the visible surface."""
    K = spec.intrinsics
    views = []
    for vid, pose in enumerate(camera_poses(spec)):
        true = render_true_depth(spec, pose)
        hit = np.isfinite(true)
        if not hit.any():
            raise ValueError(f"surface is not visible from camera {vid}")
        u = pixel_uniforms(spec.seed, vid, K.width * K.height, 4).reshape(4, K.height, K.width)
        depth = np.where(hit, true, 0.0) + spec.bias(vid)
        if spec.noise_sigma > 0:
            normal = np.sqrt(-2.0 * np.log1p(-u[0])) * np.cos(2 * math.pi * u[1])
            depth = depth + spec.noise_sigma * normal
        if spec.outlier_fraction > 0:
            sign = np.where(u[3] < 0.5, -1.0, 1.0)
            depth = np.where(u[2] < spec.outlier_fraction, depth + sign * spec.outlier_magnitude, depth)
        depth = np.where(hit & (depth > 0), depth, 0.0)
        if not (depth > 0).any():
            raise ValueError(f"camera {vid} has no valid depth")
        views.append(CameraView(vid, K, pose, DepthMap(depth)))
    return views, reference_cloud(spec, views)


def _sample_spacing(spec: SceneSpec, views) -> float:
    K = spec.intrinsics
    nearest = min(float(render_true_depth(spec, v.pose)[np.isfinite(render_true_depth(spec, v.pose))].min())
                  for v in views)
    footprint = nearest / max(K.fx, K.fy)
    return footprint / math.sqrt(spec.reference_density)


def _visible(spec: SceneSpec, views, pts: np.ndarray) -> np.ndarray:
    seen = np.zeros(len(pts), dtype=bool)
    for view in views:
        _, _, _, ok = project_many(pts, view)
        c = view.pose.center
        idx = np.flatnonzero(ok & ~seen)
        if len(idx) == 0:
            continue
        t = intersect(spec, c[None], pts[idx] - c)
        seen[idx[t >= 1 - 1e-9]] = True
    return seen


def _grid(lo, hi, step):
    n = max(1, int(math.floor((hi - lo) / step)) + 1)
    return lo + step * np.arange(n)


def reference_cloud(spec: SceneSpec, views) -> PointCloud:
    """Uniform samples of the surface seen by at least one camera."""
    s = _sample_spacing(spec, views)
    if spec.surface == "sphere":
        r = spec.sphere_radius
        n = int(math.ceil(4 * math.pi * r * r / (s * s)))
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = math.pi * (1 + 5**0.5) * i
        pts = np.asarray(spec.sphere_center) + r * np.stack(
            [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
        return PointCloud(pts[_visible(spec, views, pts)])

    # horizontal extent from the noise-free footprints
    corners = []
    for view in views:
        true = render_true_depth(spec, view.pose)
        rows, cols = np.nonzero(np.isfinite(true))
        from .geometry import unproject_many

        corners.append(unproject_many(cols, rows, true[rows, cols], view))
    allpts = np.concatenate(corners)
    lo, hi = allpts.min(0) - s, allpts.max(0) + s
    gx, gy = _grid(lo[0], hi[0], s), _grid(lo[1], hi[1], s)
    X, Y = np.meshgrid(gx, gy)
    X, Y = X.ravel(), Y.ravel()
    if spec.surface == "plane":
        pts = np.stack([X, Y, np.full_like(X, spec.plane_z)], axis=1)
    else:
        pts = np.stack([X, Y, _roof_level(spec, X)], axis=1)
        edges, levels = _roof_layout(spec)
        padded = np.concatenate([[spec.roof_base_z], levels, [spec.roof_base_z]])
        walls = []
        for i, xe in enumerate(edges):
            zlo, zhi = sorted((padded[i], padded[i + 1]))
            if zhi - zlo <= 0:
                continue
            gz = _grid(zlo, zhi, s)
            WY, WZ = np.meshgrid(gy, gz)
            walls.append(np.stack([np.full(WY.size, xe), WY.ravel(), WZ.ravel()], axis=1))
        pts = np.concatenate([pts] + walls)
    return PointCloud(pts[_visible(spec, views, pts)])
