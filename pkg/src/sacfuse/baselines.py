"""Reference fusers to compare against select-and-combine.

``consistency_fuse`` filters depth maps against each other by reprojection
and keeps the survivors; ``multiray_fuse`` triangulates every point group
into one point; ``concat_fuse`` keeps everything.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .correspond import GroupTable, _check_views, pixel_nodes
from .geometry import project_many, snap, triangulate_batch, unproject_many
from .netlet import FusedCloud, _table_from_point_groups, make_stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConsistencyConfig:
    relative_depth_tol: float = 0.01
    occlusion_margin: float = 0.01

    def __post_init__(self):
        if not self.relative_depth_tol > 0 or not self.occlusion_margin > 0:
            raise ValueError("relative_depth_tol and occlusion_margin must be positive")


def consistency_fuse(views, cfg: ConsistencyConfig | None = None) -> FusedCloud:
    """Sequential geometric-consistency filtering.

    Views act as sources in id order. Every still-valid pixel of the source
    is projected into every other view j; the nearest pixel q of j is
    removed when the projected depth is clearly in front of d_j(q)
    (occlusion) or within the relative tolerance of it (redundancy).
    """
    cfg = cfg or ConsistencyConfig()
    views = _check_views(views)
    if len(views) < 2:
        raise ValueError("consistency fusion needs at least 2 views")
    masks = [v.depth.valid.copy() for v in views]
    input_count = int(sum(m.sum() for m in masks))
    for i, src in enumerate(views):
        rows, cols = np.nonzero(masks[i])
        if len(rows) == 0:
            continue
        depths = src.depth.values[rows, cols]
        pts = unproject_many(cols, rows, depths, src)
        for j, dst in enumerate(views):
            if j == i:
                continue
            u, v, z, ok = project_many(pts, dst)
            qu, qv = snap(u[ok]), snap(v[ok])
            z = z[ok]
            dj = dst.depth.values[qv, qu]
            live = masks[j][qv, qu]
            occluded = z < (1 - cfg.occlusion_margin) * dj
            redundant = ~occluded & (np.abs(z - dj) <= cfg.relative_depth_tol * dj)
            hit = live & (occluded | redundant)
            masks[j][qv[hit], qu[hit]] = False
    pts, labels = [], []
    for view, mask in zip(views, masks):
        rows, cols = np.nonzero(mask)
        pts.append(unproject_many(cols, rows, view.depth.values[rows, cols], view))
        labels.append(np.full(len(rows), view.view_id, dtype=np.int64))
    points, labels = np.concatenate(pts), np.concatenate(labels)
    return FusedCloud(points, labels, make_stats(input_count, labels, views))


def multiray_fuse(groups, views, min_rays: int = 2) -> FusedCloud:
    """Triangulate each group from its members' pixel rays.

    Groups with fewer than ``max(2, min_rays)`` members, and groups whose
    rays are too close to parallel, emit their members unchanged. Each
    output point carries the lowest view id of its group.
    """
    views = _check_views(views)
    if not isinstance(groups, GroupTable):
        groups = _table_from_point_groups(groups)
    need = max(2, int(min_rays))
    nodes = groups.nodes
    centers = {v.view_id: v.pose.center for v in views}
    center_of = np.array([centers[int(x)] for x in nodes.view_ids]).reshape(-1, 3)
    sizes = groups.sizes
    n_groups = len(groups)
    lowest = np.full(n_groups, np.iinfo(np.int64).max)
    np.minimum.at(lowest, np.repeat(np.arange(n_groups), sizes), nodes.view_ids[groups.members])

    tri_point = np.zeros((n_groups, 3))
    tri_ok = np.zeros(n_groups, dtype=bool)
    for n in np.unique(sizes):
        if n < need:
            continue
        sel = np.flatnonzero(sizes == n)
        ids = groups.members[groups.offsets[sel][:, None] + np.arange(n)]
        o = center_of[ids]
        d = nodes.positions[ids] - o
        d /= np.linalg.norm(d, axis=2, keepdims=True)
        p, ok = triangulate_batch(o, d, np.ones(ids.shape, dtype=bool))
        tri_point[sel], tri_ok[sel] = p, ok

    eligible = sizes >= need
    degenerate = int(np.count_nonzero(eligible & ~tri_ok))
    if degenerate:
        logger.warning("%d groups were degenerate and passed through", degenerate)
    # one output for a triangulated group, else one per member; group order
    counts = np.where(tri_ok, 1, sizes)
    out_ptr = np.concatenate([[0], np.cumsum(counts)])
    points = np.empty((int(out_ptr[-1]), 3))
    labels = np.empty(int(out_ptr[-1]), dtype=np.int64)
    points[out_ptr[:-1][tri_ok]] = tri_point[tri_ok]
    labels[out_ptr[:-1][tri_ok]] = lowest[tri_ok]
    passed = np.flatnonzero(~tri_ok)
    if len(passed):
        reps = sizes[passed]
        dst = np.repeat(out_ptr[passed], reps) + _ranges(reps)
        src = np.repeat(groups.offsets[passed], reps) + _ranges(reps)
        points[dst] = nodes.positions[groups.members[src]]
        labels[dst] = np.repeat(lowest[passed], reps)
    stats = make_stats(len(nodes), labels, views)
    stats["triangulated_groups"] = int(tri_ok.sum())
    stats["degenerate_groups"] = degenerate
    return FusedCloud(points, labels, stats)


def _ranges(counts) -> np.ndarray:
    """Concatenation of ``arange(c)`` for every count."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(counts.sum()) - starts


def concat_fuse(views) -> FusedCloud:
    """All valid pixels of all views, unfused."""
    views = _check_views(views)
    nodes, _ = pixel_nodes(views)
    labels = nodes.view_ids.copy()
    return FusedCloud(nodes.positions.copy(), labels, make_stats(len(nodes), labels, views))
