"""Point groups: sets of corresponding 3-D points across depth maps.

Three strategies are available. ``reprojection`` projects each seed point
into the other views and accepts the pixel it lands on when the depths agree;
``proximity`` accepts the nearest point of every other view inside a radius;
``precomputed`` reads pixel correspondences from a text file.

Seeds are visited in (view id, row-major pixel) order and every point is
claimed by at most one group, so a single pass covers all pixels.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import PointSample, project_many, snap, view_points
from .scene_io import CameraView, SceneFormatError

logger = logging.getLogger(__name__)

STRATEGIES = ("reprojection", "proximity", "precomputed")


@dataclass(frozen=True)
class GroupingConfig:
    strategy: str = "reprojection"
    reprojection_relative_depth_tol: float = 0.01
    proximity_radius: float = 0.10
    max_group_size: int = 8
    correspondence_file: str | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown grouping strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not (self.reprojection_relative_depth_tol > 0 and self.proximity_radius > 0):
            raise ValueError("grouping tolerances must be positive")
        if self.max_group_size < 2:
            raise ValueError("max_group_size must be at least 2")


@dataclass(frozen=True, eq=False)
class PointGroup:
    members: tuple[PointSample, ...]
    seed: tuple[int, tuple[int, int]]

    def __len__(self) -> int:
        return len(self.members)

    @property
    def view_ids(self) -> list[int]:
        return [m.view_id for m in self.members]


@dataclass(frozen=True, eq=False)
class NodeTable:
    """Columnar store of point samples; row ``i`` is node ``i``."""

    view_ids: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    depths: np.ndarray
    positions: np.ndarray

    def __len__(self) -> int:
        return len(self.view_ids)

    def sample(self, i: int) -> PointSample:
        return PointSample(
            position=self.positions[i],
            view_id=int(self.view_ids[i]),
            pixel=(int(self.cols[i]), int(self.rows[i])),
            depth=float(self.depths[i]),
        )


class GroupTable(Sequence):
    """Groups stored as CSR rows of node indices; indexing yields ``PointGroup``.

    The first member of every group is its seed.
    """

    def __init__(self, nodes: NodeTable, members: np.ndarray, offsets: np.ndarray):
        self.nodes = nodes
        self.members = np.asarray(members, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)

    @classmethod
    def from_lists(cls, nodes: NodeTable, groups: list) -> "GroupTable":
        sizes = np.fromiter((len(g) for g in groups), dtype=np.int64, count=len(groups))
        offsets = np.zeros(len(groups) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        members = np.concatenate([np.asarray(g, dtype=np.int64) for g in groups]) if groups else np.zeros(0, np.int64)
        return cls(nodes, members, offsets)

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        idx = self.member_ids(k)
        samples = tuple(self.nodes.sample(int(i)) for i in idx)
        return PointGroup(samples, (samples[0].view_id, samples[0].pixel))

    def member_ids(self, k: int) -> np.ndarray:
        return self.members[self.offsets[k] : self.offsets[k + 1]]

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)


def pixel_nodes(views: list[CameraView]):
    """Node table of all valid pixels plus per-view pixel -> node maps."""
    parts, key_maps = [], []
    start = 0
    for view in views:
        rows, cols, depths, pos = view_points(view)
        key = np.full((view.height, view.width), -1, dtype=np.int64)
        key[rows, cols] = np.arange(start, start + len(rows))
        key_maps.append(key)
        parts.append((np.full(len(rows), view.view_id, dtype=np.int64), rows, cols, depths, pos))
        start += len(rows)
    nodes = NodeTable(
        view_ids=np.concatenate([p[0] for p in parts]),
        rows=np.concatenate([p[1] for p in parts]).astype(np.int64),
        cols=np.concatenate([p[2] for p in parts]).astype(np.int64),
        depths=np.concatenate([p[3] for p in parts]),
        positions=np.concatenate([p[4] for p in parts]).reshape(-1, 3),
    )
    return nodes, key_maps


def _require_valid(nodes: NodeTable):
    if len(nodes) == 0:
        raise ValueError("no valid depths in any view")


def _check_views(views):
    if not views:
        raise ValueError("at least one view is required")
    ids = [v.view_id for v in views]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate view ids in {ids}")
    return sorted(views, key=lambda v: v.view_id)


# ---------------------------------------------------------------------------
# reprojection


def _reprojection_candidates(views, nodes, seeds, view_index, key_maps, tol):
    """Candidate node of every seed in every other view, ignoring claims.

    Returns (len(seeds), n_views) arrays of candidate node ids (-1 when none)
    and of 3-D distances from seed to candidate.
    """
    cand = np.full((len(seeds), len(views)), -1, dtype=np.int64)
    dist = np.full((len(seeds), len(views)), np.inf)
    pts = nodes.positions[seeds]
    for j, view in enumerate(views):
        if j == view_index:
            continue
        u, v, z, ok = project_many(pts, view)
        qu = np.where(ok, snap(np.where(ok, u, 0.0)), 0)
        qv = np.where(ok, snap(np.where(ok, v, 0.0)), 0)
        dj = view.depth.values[qv, qu]
        ok &= dj > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ok &= np.abs(z - dj) / np.where(dj > 0, dj, 1.0) <= tol
        key = np.where(ok, key_maps[j][qv, qu], -1)
        cand[:, j] = key
        hit = key >= 0
        dist[hit, j] = np.linalg.norm(nodes.positions[key[hit]] - pts[hit], axis=1)
    return cand, dist


def _claim_sequential(seeds, cand, dist, visited, cap, out):
    for s, row, drow in zip(seeds, cand, dist):
        sel = np.flatnonzero(row >= 0)
        sel = sel[~visited[row[sel]]]
        if len(sel) > cap:
            sel = sel[np.argsort(drow[sel], kind="stable")[:cap]]
            sel.sort()
        members = row[sel]
        visited[members] = True
        out.append(np.concatenate([[s], members]))


def _claim_vectorized(seeds, cand, visited, out):
    # first seed in order wins each contested candidate
    n_seeds, n_views = cand.shape
    keep = np.zeros_like(cand, dtype=bool)
    for j in range(n_views):
        col = cand[:, j]
        ok = np.flatnonzero(col >= 0)
        ok = ok[~visited[col[ok]]]
        _, first = np.unique(col[ok], return_index=True)
        keep[ok[first], j] = True
    claimed = cand[keep]
    visited[claimed] = True
    members = np.where(keep, cand, -1)
    for s, row in zip(seeds, members):
        out.append(np.concatenate([[s], row[row >= 0]]))


def group_by_reprojection(views, nodes, key_maps, cfg: GroupingConfig) -> GroupTable:
    """Greedy reprojection grouping over an arbitrary node table.

    ``key_maps[j]`` maps each pixel of view ``j`` to the node it stands for
    (``-1`` for none); depth agreement is tested against the raster at the
    pixel the seed lands on.
    """
    visited = np.zeros(len(nodes), dtype=bool)
    cap = cfg.max_group_size - 1
    groups: list[np.ndarray] = []
    for i, view in enumerate(views):
        seeds = np.flatnonzero((nodes.view_ids == view.view_id) & ~visited)
        if len(seeds) == 0:
            continue
        visited[seeds] = True
        cand, dist = _reprojection_candidates(
            views, nodes, seeds, i, key_maps, cfg.reprojection_relative_depth_tol
        )
        if len(views) - 1 > cap:
            _claim_sequential(seeds, cand, dist, visited, cap, groups)
        else:
            _claim_vectorized(seeds, cand, visited, groups)
    return GroupTable.from_lists(nodes, groups)


def build_groups_reprojection(views: list[CameraView], cfg: GroupingConfig | None = None) -> GroupTable:
    cfg = cfg or GroupingConfig()
    views = _check_views(views)
    nodes, key_maps = pixel_nodes(views)
    _require_valid(nodes)
    return group_by_reprojection(views, nodes, key_maps, cfg)


# ---------------------------------------------------------------------------
# proximity


def group_by_proximity(views, nodes, probe_positions, probe_views, probe_keys, cfg) -> GroupTable:
    """Greedy radius grouping.

    Probes are the searchable points; each carries the node it resolves to.
    For a seed, every other view contributes the nearest probe whose node is
    still unclaimed.
    """
    visited = np.zeros(len(nodes), dtype=bool)
    cap = cfg.max_group_size - 1
    tree = cKDTree(probe_positions) if len(probe_positions) else None
    groups: list[np.ndarray] = []
    for view in views:
        seeds = np.flatnonzero((nodes.view_ids == view.view_id) & ~visited)
        if len(seeds) == 0:
            continue
        visited[seeds] = True
        neighbourhoods = tree.query_ball_point(nodes.positions[seeds], cfg.proximity_radius)
        for s, nb in zip(seeds, neighbourhoods):
            nb = np.asarray(nb, dtype=np.int64)
            nb = nb[probe_views[nb] != view.view_id]
            keys = probe_keys[nb]
            ok = keys >= 0
            nb, keys = nb[ok], keys[ok]
            ok = ~visited[keys]
            nb, keys = nb[ok], keys[ok]
            if len(nb) == 0:
                groups.append(np.array([s]))
                continue
            d = np.linalg.norm(probe_positions[nb] - nodes.positions[s], axis=1)
            # nearest per view, ties to the lower probe index
            order = np.lexsort((nb, d, probe_views[nb]))
            _, first = np.unique(probe_views[nb][order], return_index=True)
            pick = order[first]
            if len(pick) > cap:
                pick = pick[np.lexsort((probe_views[nb][pick], d[pick]))[:cap]]
                pick = pick[np.argsort(probe_views[nb][pick], kind="stable")]
            members = keys[pick]
            visited[members] = True
            groups.append(np.concatenate([[s], members]))
    return GroupTable.from_lists(nodes, groups)


def build_groups_proximity(views: list[CameraView], cfg: GroupingConfig | None = None) -> GroupTable:
    cfg = cfg or GroupingConfig(strategy="proximity")
    views = _check_views(views)
    nodes, _ = pixel_nodes(views)
    _require_valid(nodes)
    keys = np.arange(len(nodes))
    return group_by_proximity(views, nodes, nodes.positions, nodes.view_ids, keys, cfg)


# ---------------------------------------------------------------------------
# precomputed correspondences


def read_correspondences(path, views: list[CameraView]) -> np.ndarray:
    """Parse ``viewA uA vA viewB uB vB`` records into an (n, 6) int array."""
    known = {v.view_id: v for v in views}
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        try:
            rec = [int(x) for x in parts]
        except ValueError:
            rec = []
        if len(rec) != 6:
            raise SceneFormatError(path, f"line {lineno}: expected 6 integers 'viewA uA vA viewB uB vB'")
        for vid, u, v in (rec[:3], rec[3:]):
            if vid not in known:
                raise SceneFormatError(path, f"line {lineno}: unknown view id {vid}")
            view = known[vid]
            if not (0 <= u < view.width and 0 <= v < view.height):
                raise SceneFormatError(path, f"line {lineno}: pixel ({u}, {v}) outside view {vid}")
        records.append(rec)
    return np.array(records, dtype=np.int64).reshape(-1, 6)


def _pixel_key(records_view, records_u, records_v, views, key_maps):
    index = {v.view_id: k for k, v in enumerate(views)}
    out = np.empty(len(records_view), dtype=np.int64)
    for n, (vid, u, v) in enumerate(zip(records_view, records_u, records_v)):
        out[n] = key_maps[index[int(vid)]][v, u]
    return out


def components_from_pairs(n_nodes: int, a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    """Connected components (sorted node lists) touched by the pair list."""
    if len(a) == 0:
        return []
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(n_nodes, n_nodes))
    _, comp = connected_components(graph, directed=False)
    touched = np.unique(np.concatenate([a, b]))
    labels = comp[touched]
    order = np.argsort(labels, kind="stable")
    touched, labels = touched[order], labels[order]
    splits = np.flatnonzero(np.diff(labels)) + 1
    comps = np.split(touched, splits)
    comps.sort(key=lambda c: c[0])
    return comps


def _one_per_view(comp: np.ndarray, node_views: np.ndarray) -> list[np.ndarray]:
    """Keep the first node of each view; surplus nodes become singletons."""
    _, first = np.unique(node_views[comp], return_index=True)
    keep = np.zeros(len(comp), dtype=bool)
    keep[first] = True
    return [comp[keep]] + [np.array([n]) for n in comp[~keep]]


def precomputed_pixel_groups(path, views, nodes, key_maps) -> list[np.ndarray]:
    rec = read_correspondences(path, views)
    a = _pixel_key(rec[:, 0], rec[:, 1], rec[:, 2], views, key_maps)
    b = _pixel_key(rec[:, 3], rec[:, 4], rec[:, 5], views, key_maps)
    dropped_a, dropped_b = a < 0, b < 0
    if dropped_a.any() or dropped_b.any():
        logger.info("dropping %d correspondence endpoints on invalid depth",
                    int(dropped_a.sum() + dropped_b.sum()))
    both = ~dropped_a & ~dropped_b
    # endpoints whose partner was dropped still form singleton groups
    lone = np.unique(np.concatenate([a[~dropped_a & dropped_b], b[~dropped_b & dropped_a]]))
    comps = components_from_pairs(len(nodes), a[both], b[both])
    in_comp = set(np.concatenate(comps).tolist()) if comps else set()
    comps += [np.array([n]) for n in lone if n not in in_comp]
    groups = []
    for comp in comps:
        groups += _one_per_view(np.sort(comp), nodes.view_ids)
    groups.sort(key=lambda g: g[0])
    return groups


def load_groups_precomputed(path, views: list[CameraView]) -> GroupTable:
    """Groups formed by the union of listed pixel correspondences.

    Only pixels referenced in the file (with valid depth) appear; use
    :func:`with_singletons` to cover the remaining pixels.
    """
    views = _check_views(views)
    nodes, key_maps = pixel_nodes(views)
    _require_valid(nodes)
    return GroupTable.from_lists(nodes, precomputed_pixel_groups(path, views, nodes, key_maps))


def with_singletons(groups: GroupTable) -> GroupTable:
    """Append a singleton group for every node not yet in any group, in node order."""
    seen = np.zeros(len(groups.nodes), dtype=bool)
    seen[groups.members] = True
    lone = np.flatnonzero(~seen)
    lists = [groups.member_ids(k) for k in range(len(groups))] + [np.array([n]) for n in lone]
    lists.sort(key=lambda g: g[0])
    return GroupTable.from_lists(groups.nodes, lists)


def build_groups(views: list[CameraView], cfg: GroupingConfig) -> GroupTable:
    """Dispatch on ``cfg.strategy``; the result covers every valid pixel."""
    if cfg.strategy == "reprojection":
        return build_groups_reprojection(views, cfg)
    if cfg.strategy == "proximity":
        return build_groups_proximity(views, cfg)
    if cfg.correspondence_file is None:
        raise ValueError("precomputed strategy needs a correspondence file")
    return with_singletons(load_groups_precomputed(cfg.correspondence_file, views))
