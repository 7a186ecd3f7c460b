"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np

from .scene_io import CameraView


def check_views(views, min_views: int = 1) -> list[CameraView]:
    """Validate a camera set and return it sorted by view id."""
    views = list(views)
    if len(views) < min_views:
        raise ValueError(f"expected at least {min_views} view(s), got {len(views)}")
    for v in views:
        if not isinstance(v, CameraView):
            raise TypeError(f"expected CameraView, got {type(v).__name__}")
    ids = [v.view_id for v in views]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate view ids in {ids}")
    if not any(v.depth.valid.any() for v in views):
        raise ValueError("no view holds a valid depth")
    return sorted(views, key=lambda v: v.view_id)


def check_points(points, allow_empty: bool = False) -> np.ndarray:
    """Return ``points`` as a finite float64 (n, 3) array."""
    pts = np.asarray(getattr(points, "points", points), dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
    if not allow_empty and len(pts) == 0:
        raise ValueError("point set is empty")
    if not np.isfinite(pts).all():
        raise ValueError("points contain non-finite coordinates")
    return pts


def check_thresholds(values) -> list[float]:
    out = [float(t) for t in values]
    if not out:
        raise ValueError("at least one threshold is required")
    bad = [t for t in out if not t > 0]
    if bad:
        raise ValueError(f"thresholds must be positive, got {bad}")
    return out


def parse_thresholds(text: str) -> list[float]:
    """Parse a comma-separated list such as ``"0.02,0.05"``."""
    try:
        return check_thresholds(x for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ValueError(f"bad threshold list {text!r}: {exc}") from None
