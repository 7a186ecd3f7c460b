"""Markov netlets: select one source view per point group, then collapse.

Every node of a netlet is a point sample; its label is the view it should
take its geometry from. The energy of a labeling is

    E(Y) = n + sum over edges (a, b) of w_ab * [y_a != y_b],
    w_ab = exp(-|p_a - p_b|)  for |p_a - p_b| <= tau, no edge otherwise,

a constant unary cost of 1 per node plus a Potts penalty on each edge.
Uniform labelings are therefore always optimal within a connected netlet;
ties are broken by a per-netlet label preference order (views owning the
most nodes first, then lowest view id).

Collapsing keeps, for each group of the netlet and each label assigned to
its nodes, the group's own point from that view. Fused points are always
copies of input samples; nothing is averaged.
"""

from __future__ import annotations

import functools
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .correspond import (
    GroupingConfig,
    GroupTable,
    NodeTable,
    build_groups,
    group_by_proximity,
    group_by_reprojection,
    pixel_nodes,
    precomputed_pixel_groups,
    _check_views,
    _require_valid,
)
from .geometry import PointSample, unproject_many
from .scene_io import CameraView, PointCloud
from .superpixel import centroid_pixels, pseudo_image, slic_segment

logger = logging.getLogger(__name__)

# strict-improvement margin for single-node moves
ICM_EPS = 1e-12
_BATCH_CELLS = 1 << 21


class SolverLimitError(RuntimeError):
    """The netlet has more labelings than the exact solver may enumerate."""


@dataclass(frozen=True)
class SacConfig:
    tau: float = 2.0
    use_superpixels: bool = False
    exact_solver_limit: int = 4096
    icm_max_sweeps: int = 20
    superpixel_size: int = 64
    slic_compactness: float = 10.0
    slic_iterations: int = 10

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.exact_solver_limit < 1 or self.icm_max_sweeps < 1:
            raise ValueError("solver limits must be >= 1")
        if self.superpixel_size < 1 or self.slic_iterations < 1:
            raise ValueError("superpixel parameters must be >= 1")


@dataclass(frozen=True, eq=False)
class Netlet:
    nodes: tuple[PointSample, ...]
    labels: tuple[int, ...]
    edges: np.ndarray
    weights: np.ndarray
    group_ids: tuple[int, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if not self.groups:
            object.__setattr__(self, "groups", (tuple(range(len(self.nodes))),))

    @classmethod
    def from_samples(cls, samples, tau: float = 2.0, groups=None, group_ids=()) -> "Netlet":
        """Fully connect ``samples`` within ``tau`` and derive the label order."""
        samples = tuple(samples)
        pos = np.array([s.position for s in samples], dtype=np.float64).reshape(-1, 3)
        views = [s.view_id for s in samples]
        w = pair_weights(pos, tau)
        a, b = np.triu_indices(len(samples), 1)
        keep = w > 0
        edges = np.stack([a[keep], b[keep]], axis=1).reshape(-1, 2)
        return cls(samples, label_order(views), edges, w[keep], tuple(group_ids),
                   tuple(tuple(g) for g in groups) if groups else ())

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes]).reshape(-1, 3)

    @property
    def views(self) -> np.ndarray:
        return np.array([n.view_id for n in self.nodes], dtype=np.int64)

    @property
    def candidate_labels(self) -> list[frozenset]:
        return [frozenset(self.labels)] * len(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Labeling:
    assignment: tuple[int, ...]


@dataclass(eq=False)
class FusedCloud:
    points: np.ndarray
    labels: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    def to_point_cloud(self) -> PointCloud:
        return PointCloud(self.points, self.labels)


def make_stats(input_count: int, labels: np.ndarray, views) -> dict:
    ids = [v.view_id for v in views]
    counts = {int(i): int(np.count_nonzero(labels == i)) for i in ids}
    return {
        "input_points": int(input_count),
        "output_points": int(len(labels)),
        "per_view_counts": counts,
    }


def label_order(views) -> tuple[int, ...]:
    """Distinct views, most frequent first, ties to the lowest id."""
    uniq, counts = np.unique(np.asarray(views, dtype=np.int64), return_counts=True)
    order = np.lexsort((uniq, -counts))
    return tuple(int(x) for x in uniq[order])


def pair_weights(positions: np.ndarray, tau: float) -> np.ndarray:
    """Edge weight for every node pair in ``np.triu_indices`` order; 0 means no edge."""
    a, b = np.triu_indices(len(positions), 1)
    d = np.linalg.norm(positions[a] - positions[b], axis=1)
    return np.where(d <= tau, np.exp(-d), 0.0)


# ---------------------------------------------------------------------------
# single-netlet API


def _check_labeling(netlet: Netlet, labeling) -> tuple[int, ...]:
    y = tuple(int(x) for x in getattr(labeling, "assignment", labeling))
    if len(y) != len(netlet.nodes):
        raise ValueError(f"labeling has {len(y)} entries for {len(netlet.nodes)} nodes")
    allowed = set(netlet.labels)
    bad = [x for x in y if x not in allowed]
    if bad:
        raise ValueError(f"labels {bad} outside candidate set {sorted(allowed)}")
    return y


def energy(netlet: Netlet, labeling) -> float:
    y = _check_labeling(netlet, labeling)
    e = float(len(y))
    for (a, b), w in zip(netlet.edges.tolist(), netlet.weights.tolist()):
        if y[a] != y[b]:
            e += w
    return e


def solve_exact(netlet: Netlet, limit: int = 4096) -> Labeling:
    """Global minimizer by enumeration, preferring labels earlier in ``netlet.labels``."""
    n, k = len(netlet.nodes), len(netlet.labels)
    if k**n > limit:
        raise SolverLimitError(f"{k}^{n} labelings exceed the limit of {limit}")
    if n == 0:
        return Labeling(())
    a, b = np.triu_indices(n, 1)
    W = np.zeros(len(a))
    pair_index = {(int(x), int(y)): p for p, (x, y) in enumerate(zip(a, b))}
    for (x, y), w in zip(netlet.edges.tolist(), netlet.weights.tolist()):
        W[pair_index[(min(x, y), max(x, y))]] = w
    ranks = _exact_ranks(W[None], n, k)[0]
    return Labeling(tuple(netlet.labels[r] for r in ranks))


def solve_icm(netlet: Netlet, init, max_sweeps: int = 20) -> Labeling:
    """Iterated conditional modes from ``init``; sweeps nodes in order."""
    y = list(_check_labeling(netlet, init))
    incident: list[list[tuple[int, float]]] = [[] for _ in netlet.nodes]
    for (a, b), w in zip(netlet.edges.tolist(), netlet.weights.tolist()):
        incident[a].append((b, w))
        incident[b].append((a, w))
    for _ in range(max_sweeps):
        changed = False
        for a, nbrs in enumerate(incident):
            if not nbrs:
                continue
            cost = {lab: sum(w for b, w in nbrs if y[b] != lab) for lab in netlet.labels}
            best = min(netlet.labels, key=lambda lab: cost[lab])
            if cost[best] < cost[y[a]] - ICM_EPS:
                y[a] = best
                changed = True
        if not changed:
            break
    return Labeling(tuple(y))


def collapse_local(netlet: Netlet, labeling) -> list[int]:
    """Local indices of the nodes kept by the collapse, ordered by (label, group)."""
    y = _check_labeling(netlet, labeling)
    views = [n.view_id for n in netlet.nodes]
    kept: dict[int, tuple[int, int]] = {}
    for g, members in enumerate(netlet.groups):
        own = {views[i]: i for i in members}
        for lab in sorted({y[i] for i in members}):
            if lab in own and own[lab] not in kept:
                kept[own[lab]] = (lab, g)
    return sorted(kept, key=lambda i: kept[i])


def collapse(netlet: Netlet, labeling) -> list[tuple[np.ndarray, int]]:
    return [(netlet.nodes[i].position, netlet.nodes[i].view_id) for i in collapse_local(netlet, labeling)]


# ---------------------------------------------------------------------------
# columnar netlet sets


class NetletSet(Sequence):
    """All netlets of a scene in CSR columns; indexing yields :class:`Netlet`."""

    def __init__(self, nodes: NodeTable, node_ptr, node_ids, pair_ptr, pair_w,
                 label_ptr, labels, group_ptr, group_ids, groups: GroupTable):
        self.nodes = nodes
        self.node_ptr, self.node_ids = node_ptr, node_ids
        self.pair_ptr, self.pair_w = pair_ptr, pair_w
        self.label_ptr, self.labels = label_ptr, labels
        self.group_ptr, self.group_ids = group_ptr, group_ids
        self.groups = groups

    def __len__(self) -> int:
        return len(self.node_ptr) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.node_ptr)

    @property
    def label_counts(self) -> np.ndarray:
        return np.diff(self.label_ptr)

    def _local_groups(self, k: int, ids: np.ndarray):
        gids = self.group_ids[self.group_ptr[k] : self.group_ptr[k + 1]]
        where = {int(n): i for i, n in enumerate(ids)}
        return tuple(int(g) for g in gids), tuple(
            tuple(where[int(n)] for n in self.groups.member_ids(int(g))) for g in gids
        )

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        ids = self.node_ids[self.node_ptr[k] : self.node_ptr[k + 1]]
        w = self.pair_w[self.pair_ptr[k] : self.pair_ptr[k + 1]]
        a, b = np.triu_indices(len(ids), 1)
        keep = w > 0
        gids, local = self._local_groups(k, ids)
        return Netlet(
            nodes=tuple(self.nodes.sample(int(i)) for i in ids),
            labels=tuple(int(x) for x in self.labels[self.label_ptr[k] : self.label_ptr[k + 1]]),
            edges=np.stack([a[keep], b[keep]], axis=1).reshape(-1, 2),
            weights=w[keep],
            group_ids=gids,
            groups=local,
        )

    def is_simple(self) -> bool:
        """True when every netlet holds exactly one group."""
        return bool(np.all(np.diff(self.group_ptr) == 1))


def _csr(sizes) -> np.ndarray:
    ptr = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    return ptr


def _merge_shared(groups: GroupTable):
    """Netlet membership when some nodes belong to several groups."""
    n_groups, n_nodes = len(groups), len(groups.nodes)
    gidx = np.repeat(np.arange(n_groups), groups.sizes)
    graph = coo_matrix(
        (np.ones(len(gidx)), (gidx, n_groups + groups.members)),
        shape=(n_groups + n_nodes, n_groups + n_nodes),
    )
    _, comp = connected_components(graph, directed=False)
    gcomp = comp[:n_groups]
    order = np.unique(gcomp, return_index=True)
    comp_of_first = order[0][np.argsort(order[1], kind="stable")]
    netlet_groups, netlet_nodes = [], []
    for c in comp_of_first:
        gids = np.flatnonzero(gcomp == c)
        ids = np.concatenate([groups.member_ids(g) for g in gids])
        _, first = np.unique(ids, return_index=True)
        netlet_groups.append(gids)
        netlet_nodes.append(ids[np.sort(first)])
    return netlet_groups, netlet_nodes


def build_netlets(groups, cfg: SacConfig | None = None) -> NetletSet:
    """One netlet per connected component of groups that share nodes."""
    cfg = cfg or SacConfig()
    if not isinstance(groups, GroupTable):
        groups = _table_from_point_groups(groups)
    nodes = groups.nodes
    shared = len(groups.members) and np.bincount(groups.members, minlength=len(nodes)).max() > 1
    if shared:
        netlet_groups, netlet_nodes = _merge_shared(groups)
        node_ptr = _csr([len(x) for x in netlet_nodes])
        node_ids = np.concatenate(netlet_nodes) if netlet_nodes else np.zeros(0, np.int64)
        group_ptr = _csr([len(x) for x in netlet_groups])
        group_ids = np.concatenate(netlet_groups) if netlet_groups else np.zeros(0, np.int64)
    else:
        node_ptr, node_ids = groups.offsets, groups.members
        group_ptr = np.arange(len(groups) + 1, dtype=np.int64)
        group_ids = np.arange(len(groups), dtype=np.int64)

    sizes = np.diff(node_ptr)
    pair_ptr = _csr(sizes * (sizes - 1) // 2)
    pair_w = np.zeros(pair_ptr[-1])
    for n in np.unique(sizes):
        if n < 2:
            continue
        sel = np.flatnonzero(sizes == n)
        ids = node_ids[node_ptr[sel][:, None] + np.arange(n)]
        pos = nodes.positions[ids]
        a, b = np.triu_indices(n, 1)
        d = np.linalg.norm(pos[:, a] - pos[:, b], axis=2)
        w = np.where(d <= cfg.tau, np.exp(-d), 0.0)
        pair_w[pair_ptr[sel][:, None] + np.arange(len(a))] = w

    labels_list = _label_orders(nodes.view_ids, node_ptr, node_ids)
    label_ptr = _csr([len(x) for x in labels_list])
    labels = np.concatenate(labels_list) if labels_list else np.zeros(0, np.int64)
    return NetletSet(nodes, node_ptr, node_ids, pair_ptr, pair_w, label_ptr, labels,
                     group_ptr, group_ids, groups)


def _label_orders(view_ids, node_ptr, node_ids):
    """Preference-ordered label list per netlet (vectorized over all netlets)."""
    n_net = len(node_ptr) - 1
    net = np.repeat(np.arange(n_net), np.diff(node_ptr))
    v = view_ids[node_ids]
    pairs, counts = np.unique(np.stack([net, v], axis=1), axis=0, return_counts=True)
    order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
    pairs = pairs[order]
    splits = np.flatnonzero(np.diff(pairs[:, 0])) + 1
    return np.split(pairs[:, 1], splits) if len(pairs) else []


def _table_from_point_groups(point_groups) -> GroupTable:
    index: dict[tuple[int, tuple[int, int]], int] = {}
    samples: list[PointSample] = []
    lists = []
    for g in point_groups:
        ids = []
        for s in g.members:
            key = (s.view_id, tuple(s.pixel))
            if key not in index:
                index[key] = len(samples)
                samples.append(s)
            ids.append(index[key])
        lists.append(ids)
    nodes = NodeTable(
        view_ids=np.array([s.view_id for s in samples], dtype=np.int64),
        rows=np.array([s.pixel[1] for s in samples], dtype=np.int64),
        cols=np.array([s.pixel[0] for s in samples], dtype=np.int64),
        depths=np.array([s.depth for s in samples], dtype=np.float64),
        positions=np.array([s.position for s in samples], dtype=np.float64).reshape(-1, 3),
    )
    return GroupTable.from_lists(nodes, lists)


# ---------------------------------------------------------------------------
# batched solving


@functools.lru_cache(maxsize=64)
def _configs(n: int, k: int) -> np.ndarray:
    """All rank tuples in lexicographic order, shape (k**n, n)."""
    out = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(-1, n)
    out.flags.writeable = False
    return out


def _exact_ranks(W: np.ndarray, n: int, k: int) -> np.ndarray:
    """Minimizing rank tuple for each row of pair weights ``W`` (b, n(n-1)/2).

    Configurations are scanned in lexicographic rank order and the first
    minimum wins, which realizes the label preference order.
    """
    cfgs = _configs(n, k)
    a, b = np.triu_indices(n, 1)
    cut = (cfgs[:, a] != cfgs[:, b]).astype(np.float64)  # (C, P)
    out = np.empty((len(W), n), dtype=np.int64)
    chunk = max(1, _BATCH_CELLS // len(cfgs))
    for s in range(0, len(W), chunk):
        Wc = W[s : s + chunk]
        E = np.full((len(Wc), len(cfgs)), float(n))
        # accumulate in edge order so energies match `energy` bit for bit
        for p in range(len(a)):
            E += Wc[:, p, None] * cut[None, :, p]
        out[s : s + chunk] = cfgs[np.argmin(E, axis=1)]
    return out


def _solve_bucket_exact(net: NetletSet, sel: np.ndarray, n: int, k: int) -> np.ndarray:
    """Exact ranks for netlets ``sel`` that all have n nodes and k labels."""
    P = n * (n - 1) // 2
    W = net.pair_w[net.pair_ptr[sel][:, None] + np.arange(P)] if P else np.zeros((len(sel), 0))
    return _exact_ranks(W, n, k)


def solve_netlets(net: NetletSet, cfg: SacConfig | None = None, n_jobs: int = 1) -> np.ndarray:
    """Label for every entry of ``net.node_ids``.

    Netlets whose labeling space fits ``cfg.exact_solver_limit`` are solved
    exactly in batches; larger ones fall back to ICM started from each
    node's own view.
    """
    cfg = cfg or SacConfig()
    sizes, kcount = net.sizes, net.label_counts
    assignment = np.empty(len(net.node_ids), dtype=np.int64)
    with np.errstate(over="ignore"):
        exact = kcount.astype(np.float64) ** sizes <= cfg.exact_solver_limit
    jobs = []
    buckets = np.unique(np.stack([sizes[exact], kcount[exact]], axis=1), axis=0) if exact.any() else []
    for n, k in buckets:
        sel = np.flatnonzero(exact & (sizes == n) & (kcount == k))
        step = max(1, -(-len(sel) // max(1, n_jobs)))
        jobs += [(sel[i : i + step], int(n), int(k)) for i in range(0, len(sel), step)]

    def run(job):
        sel, n, k = job
        return sel, n, _solve_bucket_exact(net, sel, n, k)

    if n_jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    for sel, n, ranks in results:
        lab = net.labels[net.label_ptr[sel][:, None] + ranks]
        assignment[net.node_ptr[sel][:, None] + np.arange(n)] = lab

    heavy = np.flatnonzero(~exact)
    if len(heavy):
        logger.info("%d netlets exceed the exact limit; using ICM", len(heavy))
    for k in heavy:
        netlet = net[int(k)]
        init = tuple(int(v) for v in netlet.views)
        y = solve_icm(netlet, init, cfg.icm_max_sweeps).assignment
        assignment[net.node_ptr[k] : net.node_ptr[k + 1]] = y
    return assignment


def collapse_netlets(net: NetletSet, assignment: np.ndarray) -> np.ndarray:
    """Global node ids kept by the collapse, ordered by (netlet, label, group)."""
    view_ids = net.nodes.view_ids
    n_net = len(net)
    if net.is_simple():
        netlet_of = np.repeat(np.arange(n_net), net.sizes)
        own = view_ids[net.node_ids]
        # a node survives when its own view was chosen for some node of its netlet
        chosen_keys = np.unique(np.stack([netlet_of, assignment], axis=1), axis=0)
        node_keys = np.stack([netlet_of, own], axis=1)
        survive = _rows_in(node_keys, chosen_keys)
        idx = np.flatnonzero(survive)
        idx = idx[np.lexsort((own[idx], netlet_of[idx]))]
        return net.node_ids[idx]
    out = []
    for k in range(n_net):
        ids = net.node_ids[net.node_ptr[k] : net.node_ptr[k + 1]]
        y = assignment[net.node_ptr[k] : net.node_ptr[k + 1]]
        gids, local = net._local_groups(k, ids)
        views = view_ids[ids]
        kept: dict[int, tuple[int, int]] = {}
        for g, members in enumerate(local):
            own = {int(views[i]): i for i in members}
            for lab in sorted({int(y[i]) for i in members}):
                if lab in own and own[lab] not in kept:
                    kept[own[lab]] = (lab, g)
        out.extend(int(ids[i]) for i in sorted(kept, key=lambda i: kept[i]))
    return np.array(out, dtype=np.int64)


def _rows_in(rows: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Membership of each 2-column row of ``rows`` in ``table``."""
    if len(table) == 0:
        return np.zeros(len(rows), dtype=bool)
    span = int(max(rows[:, 1].max(initial=0), table[:, 1].max(initial=0))) + 1
    a = rows[:, 0] * span + rows[:, 1]
    b = table[:, 0] * span + table[:, 1]
    return np.isin(a, b)


# ---------------------------------------------------------------------------
# pipeline


def _superpixel_nodes(views, cfg: SacConfig, n_jobs: int):
    """Centroid node table, pixel -> centroid-node maps and segmentations."""

    def segment(view):
        img = view.image if view.image is not None else pseudo_image(view)
        k = max(1, min(view.width * view.height, round(view.width * view.height / cfg.superpixel_size)))
        return slic_segment(img, k, cfg.slic_compactness, cfg.slic_iterations)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            segs = list(pool.map(segment, views))
    else:
        segs = [segment(v) for v in views]

    parts, key_maps = [], []
    start = 0
    for view, seg in zip(views, segs):
        pix = centroid_pixels(seg, view.depth.valid)
        clusters = np.flatnonzero(pix >= 0)
        rows, cols = pix[clusters] // view.width, pix[clusters] % view.width
        depths = view.depth.values[rows, cols]
        pos = unproject_many(cols, rows, depths, view)
        node_of_cluster = np.full(seg.cluster_count, -1, dtype=np.int64)
        node_of_cluster[clusters] = np.arange(start, start + len(clusters))
        key = node_of_cluster[seg.labels]
        key[~view.depth.valid] = -1
        key_maps.append(key)
        parts.append((np.full(len(clusters), view.view_id, dtype=np.int64), rows, cols, depths, pos))
        start += len(clusters)
    nodes = NodeTable(
        view_ids=np.concatenate([p[0] for p in parts]),
        rows=np.concatenate([p[1] for p in parts]).astype(np.int64),
        cols=np.concatenate([p[2] for p in parts]).astype(np.int64),
        depths=np.concatenate([p[3] for p in parts]),
        positions=np.concatenate([p[4] for p in parts]).reshape(-1, 3),
    )
    return nodes, key_maps, segs


def _centroid_groups_precomputed(views, cnodes, key_maps, grouping, cfg_cap):
    pnodes, pkeys = pixel_nodes(views)
    pgroups = precomputed_pixel_groups(grouping.correspondence_file, views, pnodes, pkeys)
    group_of = np.full(len(pnodes), -1, dtype=np.int64)
    for g, members in enumerate(pgroups):
        group_of[members] = g
    index = {v.view_id: j for j, v in enumerate(views)}
    visited = np.zeros(len(cnodes), dtype=bool)
    out = []
    for s in range(len(cnodes)):
        if visited[s]:
            continue
        visited[s] = True
        j = index[int(cnodes.view_ids[s])]
        pn = pkeys[j][cnodes.rows[s], cnodes.cols[s]]
        members = []
        if pn >= 0 and group_of[pn] >= 0:
            seen_views = {int(cnodes.view_ids[s])}
            for m in pgroups[group_of[pn]]:
                vj = index[int(pnodes.view_ids[m])]
                key = key_maps[vj][pnodes.rows[m], pnodes.cols[m]]
                vid = int(pnodes.view_ids[m])
                if key < 0 or visited[key] or vid in seen_views or len(members) >= cfg_cap:
                    continue
                seen_views.add(vid)
                members.append(key)
                visited[key] = True
        out.append(np.array([s] + members, dtype=np.int64))
    return GroupTable.from_lists(cnodes, out)


def fuse(views: list[CameraView], cfg: SacConfig | None = None,
         grouping: GroupingConfig | None = None, n_jobs: int = 1,
         return_details: bool = False):
    """Select-and-combine fusion of ``views`` into one labeled cloud.

    With ``return_details`` the result is ``(cloud, details)`` where
    ``details`` holds the groups, netlets and node assignment; in superpixel
    mode ``centroid_of_pixel`` maps every pixel node to its centroid node.
    """
    cfg = cfg or SacConfig()
    grouping = grouping or GroupingConfig()
    views = _check_views(views)
    pnodes, pkeys = pixel_nodes(views)
    _require_valid(pnodes)

    centroid_of = None
    if not cfg.use_superpixels:
        groups = build_groups(views, grouping)
        net = build_netlets(groups, cfg)
        assignment = solve_netlets(net, cfg, n_jobs)
        kept = collapse_netlets(net, assignment)
        source = kept
    else:
        cnodes, ckeys, segs = _superpixel_nodes(views, cfg, n_jobs)
        if grouping.strategy == "reprojection":
            groups = group_by_reprojection(views, cnodes, ckeys, grouping)
        elif grouping.strategy == "proximity":
            probe_keys = np.concatenate([km[v.depth.valid] for km, v in zip(ckeys, views)])
            groups = group_by_proximity(views, cnodes, pnodes.positions, pnodes.view_ids, probe_keys, grouping)
        else:
            if grouping.correspondence_file is None:
                raise ValueError("precomputed strategy needs a correspondence file")
            groups = _centroid_groups_precomputed(views, cnodes, ckeys, grouping, grouping.max_group_size - 1)
        net = build_netlets(groups, cfg)
        assignment = solve_netlets(net, cfg, n_jobs)
        source = _expand_clusters(net, assignment, cnodes, ckeys, pkeys, views)
        kept = None
        centroid_of = np.concatenate([ck[pk >= 0] for ck, pk in zip(ckeys, pkeys)])

    cloud = FusedCloud(
        points=pnodes.positions[source],
        labels=pnodes.view_ids[source].copy(),
    )
    cloud.stats = make_stats(len(pnodes), cloud.labels, views)
    if return_details:
        return cloud, {"groups": groups, "netlets": net, "assignment": assignment,
                       "kept_nodes": kept, "source_nodes": source,
                       "centroid_of_pixel": centroid_of}
    return cloud


def _expand_clusters(net, assignment, cnodes, ckeys, pkeys, views):
    """Pixel nodes of every cluster whose centroid kept its own view.

    Ordered by netlet, then label, then row-major pixel.
    """
    netlet_of = np.repeat(np.arange(len(net)), net.sizes)
    keep = assignment == cnodes.view_ids[net.node_ids]
    centroid = net.node_ids[keep]
    rank = np.full(len(cnodes), -1, dtype=np.int64)
    order = np.lexsort((cnodes.view_ids[centroid], netlet_of[keep]))
    rank[centroid[order]] = np.arange(len(order))
    # gather pixel nodes with the rank of their cluster's centroid
    pix_ids, pix_rank = [], []
    for key, pk in zip(ckeys, pkeys):
        valid = pk >= 0
        c = key[valid]
        r = np.where(c >= 0, rank[np.maximum(c, 0)], -1)
        ok = r >= 0
        pix_ids.append(pk[valid][ok])
        pix_rank.append(r[ok])
    pix_ids, pix_rank = np.concatenate(pix_ids), np.concatenate(pix_rank)
    return pix_ids[np.lexsort((pix_ids, pix_rank))]
