import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sacfuse.correspond import (
    GroupingConfig,
    PointGroup,
    build_groups,
    build_groups_proximity,
    build_groups_reprojection,
    load_groups_precomputed,
    read_correspondences,
    with_singletons,
)
from sacfuse.geometry import project, unproject
from sacfuse.scene_io import SceneFormatError

from conftest import make_view


def _as_sets(groups):
    return [[(m.view_id, m.pixel) for m in g.members] for g in groups]


def _reprojection_oracle(views, tol, cap):
    """Literal per-seed greedy grouping with scalar geometry."""
    visited = set()
    out = []
    for i, vi in enumerate(views):
        for r in range(vi.height):
            for c in range(vi.width):
                d = vi.depth.values[r, c]
                if not d > 0 or (i, r, c) in visited:
                    continue
                visited.add((i, r, c))
                p = unproject((c, r), d, vi)
                cands = []
                for j, vj in enumerate(views):
                    if j == i:
                        continue
                    res = project(p, vj)
                    if res is None:
                        continue
                    (u, v), z = res
                    qu = int(math.copysign(math.floor(abs(u) + 0.5), u))
                    qv = int(math.copysign(math.floor(abs(v) + 0.5), v))
                    dj = vj.depth.values[qv, qu]
                    if dj > 0 and abs(z - dj) / dj <= tol and (j, qv, qu) not in visited:
                        q = unproject((qu, qv), dj, vj)
                        cands.append((float(np.linalg.norm(q - p)), j, qv, qu))
                if len(cands) > cap:
                    cands = sorted(cands, key=lambda x: x[0])[:cap]
                    cands.sort(key=lambda x: x[1])
                for _, j, qv, qu in cands:
                    visited.add((j, qv, qu))
                out.append([(vi.view_id, (c, r))] + [(views[j].view_id, (qu, qv)) for _, j, qv, qu in cands])
    return out


def test_identical_views_pair_up(twin_views):
    groups = build_groups_reprojection(twin_views, GroupingConfig())
    assert len(groups) == 48
    assert all(len(g) == 2 for g in groups)
    assert all(g.members[0].pixel == g.members[1].pixel for g in groups)


def test_single_view_singletons():
    groups = build_groups_reprojection([make_view(0)], GroupingConfig())
    assert len(groups) == 48 and all(len(g) == 1 for g in groups)


def test_fronto_parallel_plane_homography():
    # 1 m baseline along x, plane z=10: the analytic shift is fx * 1 / 10 pixels
    f, W, H = 40.0, 40, 10
    a, b = make_view(0, 10.0, W, H, f), make_view(1, 10.0, W, H, f, center=(1.0, 0, 0))
    groups = build_groups_reprojection([a, b], GroupingConfig(reprojection_relative_depth_tol=0.01))
    shift = f * 1.0 / 10.0
    pairs = {g.members[0].pixel: g.members[1].pixel for g in groups if len(g) == 2 and g.seed[0] == 0}
    interior = [(c, r) for r in range(H) for c in range(W) if 0 <= c - shift < W]
    assert len(pairs) == len(interior)
    for (c, r) in interior:
        assert pairs[(c, r)] == (c - 4, r)


def test_invalid_input():
    with pytest.raises(ValueError):
        build_groups_reprojection([make_view(0, 0.0)], GroupingConfig())
    with pytest.raises(ValueError):
        GroupingConfig(max_group_size=1)
    with pytest.raises(ValueError):
        GroupingConfig(strategy="magic")


def _random_scene(seed, n_views, w=9, h=7):
    rng = np.random.default_rng(seed)
    views = []
    for k in range(n_views):
        depth = 10.0 + rng.normal(0, 0.03, (h, w))
        depth[rng.random((h, w)) < 0.1] = 0.0
        views.append(make_view(k, depth, w, h, f=12.0, center=(rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3), 0)))
    return views


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n_views=st.integers(1, 5), cap=st.integers(2, 5))
def test_reprojection_matches_scalar_oracle(seed, n_views, cap):
    views = _random_scene(seed, n_views)
    cfg = GroupingConfig(reprojection_relative_depth_tol=0.005, max_group_size=cap)
    got = _as_sets(build_groups_reprojection(views, cfg))
    assert got == _reprojection_oracle(views, 0.005, cap - 1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n_views=st.integers(1, 4),
       strategy=st.sampled_from(["reprojection", "proximity"]))
def test_partition_property(seed, n_views, strategy):
    views = _random_scene(seed, n_views)
    groups = build_groups(views, GroupingConfig(strategy=strategy, proximity_radius=0.2))
    keys = [k for g in _as_sets(groups) for k in g]
    valid = {(v.view_id, (c, r)) for v in views for r, c in zip(*np.nonzero(v.depth.valid))}
    assert len(keys) == len(set(keys)) and set(keys) == valid
    for g in groups:
        ids = g.view_ids
        assert len(ids) == len(set(ids))
        for m in g.members:
            view = views[m.view_id]
            assert np.allclose(m.position, unproject(m.pixel, view.depth.values[m.pixel[1], m.pixel[0]], view))


def _point_view(view_id, point, w=3, h=3):
    """A 3x3 view whose only valid pixel is the center, seeing ``point``."""
    point = np.asarray(point, dtype=np.float64)
    depth = np.zeros((h, w))
    depth[1, 1] = 10.0
    return make_view(view_id, depth, w, h, center=point - [0, 0, 10.0])


def test_proximity_radius_cases():
    cfg = GroupingConfig(strategy="proximity", proximity_radius=0.10)
    near = build_groups_proximity([_point_view(0, [0, 0, 10]), _point_view(1, [0.05, 0, 10])], cfg)
    assert [len(g) for g in near] == [2]
    far = build_groups_proximity([_point_view(0, [0, 0, 10]), _point_view(1, [0.15, 0, 10])], cfg)
    assert [len(g) for g in far] == [1, 1]
    three = build_groups_proximity(
        [_point_view(0, [0, 0, 10]), _point_view(1, [0.04, 0, 10]), _point_view(2, [0, 0.04, 10])], cfg)
    assert [len(g) for g in three] == [3]


def _proximity_oracle(views, radius, cap):
    samples = []
    for v in views:
        for r, c in zip(*np.nonzero(v.depth.valid)):
            samples.append((v.view_id, (int(c), int(r)), unproject((c, r), v.depth.values[r, c], v)))
    visited = [False] * len(samples)
    out = []
    for s, (vid, pix, p) in enumerate(samples):
        if visited[s]:
            continue
        visited[s] = True
        best = {}
        for t, (vt, pt, q) in enumerate(samples):
            if visited[t] or vt == vid:
                continue
            d = float(np.linalg.norm(q - p))
            if d <= radius and (vt not in best or (d, t) < best[vt][:2]):
                best[vt] = (d, t)
        picks = sorted(best.items(), key=lambda kv: (kv[1][0], kv[0]))[:cap]
        picks.sort()
        for _, (_, t) in picks:
            visited[t] = True
        out.append([(vid, pix)] + [(samples[t][0], samples[t][1]) for _, (_, t) in picks])
    return out


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n_views=st.integers(2, 4), cap=st.integers(2, 4))
def test_proximity_matches_brute_force(seed, n_views, cap):
    views = _random_scene(seed, n_views, w=6, h=5)
    cfg = GroupingConfig(strategy="proximity", proximity_radius=0.35, max_group_size=cap)
    assert _as_sets(build_groups_proximity(views, cfg)) == _proximity_oracle(views, 0.35, cap - 1)


def test_worker_independence(twin_views):
    # grouping has no worker knob; repeated runs must agree exactly
    a = _as_sets(build_groups_reprojection(twin_views, GroupingConfig()))
    b = _as_sets(build_groups_reprojection(list(reversed(twin_views)), GroupingConfig()))
    assert a == b


def _write(tmp_path, text):
    p = tmp_path / "corr.txt"
    p.write_text(text)
    return p


def test_precomputed_pair(tmp_path, twin_views):
    groups = load_groups_precomputed(_write(tmp_path, "0 3 4 1 7 4\n"), twin_views)
    assert _as_sets(groups) == [[(0, (3, 4)), (1, (7, 4))]]


def test_precomputed_invalid_endpoint(tmp_path):
    d = np.full((6, 8), 10.0)
    d[4, 7] = 0.0
    views = [make_view(0), make_view(1, d)]
    groups = load_groups_precomputed(_write(tmp_path, "0 3 4 1 7 4\n"), views)
    assert _as_sets(groups) == [[(0, (3, 4))]]


def test_precomputed_chain_union_find(tmp_path):
    views = [make_view(k) for k in range(3)]
    groups = load_groups_precomputed(_write(tmp_path, "0 1 1 1 2 2\n1 2 2 2 3 3\n"), views)
    assert _as_sets(groups) == [[(0, (1, 1)), (1, (2, 2)), (2, (3, 3))]]


def _union_find_oracle(records):
    parent = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            x = parent[x]
        return x

    for a, b in records:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    comps = {}
    for x in parent:
        comps.setdefault(find(x), set()).add(x)
    return sorted(sorted(c) for c in comps.values())


@settings(max_examples=30, deadline=None)
@given(records=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 7), st.integers(0, 5),
                                  st.integers(0, 3), st.integers(0, 7), st.integers(0, 5)),
                        min_size=1, max_size=12))
def test_precomputed_components_property(tmp_path_factory, records):
    views = [make_view(k) for k in range(4)]
    path = tmp_path_factory.mktemp("c") / "c.txt"
    path.write_text("".join(" ".join(map(str, r)) + "\n" for r in records))
    groups = _as_sets(load_groups_precomputed(path, views))
    pairs = [((a, (b, c)), (d, (e, f))) for a, b, c, d, e, f in records]
    comps = _union_find_oracle(pairs)
    # every group lies in one component and holds at most one node per view
    where = {k: i for i, c in enumerate(comps) for k in c}
    for g in groups:
        assert len({where[k] for k in g}) == 1
        assert len({k[0] for k in g}) == len(g)
    # every referenced pixel appears exactly once
    flat = [k for g in groups for k in g]
    assert sorted(flat) == sorted(where)
    # one multi-view group per component, holding each of its views
    for c in comps:
        views_in = {k[0] for k in c}
        biggest = max((g for g in groups if where[g[0]] == where[next(iter(c))]), key=len)
        assert {k[0] for k in biggest} == views_in


def test_precomputed_errors(tmp_path, twin_views):
    with pytest.raises(SceneFormatError, match="line 1"):
        read_correspondences(_write(tmp_path, "0 1 2 1 2\n"), twin_views)
    with pytest.raises(SceneFormatError, match="unknown view"):
        read_correspondences(_write(tmp_path, "0 1 2 9 2 2\n"), twin_views)
    with pytest.raises(SceneFormatError, match="outside"):
        read_correspondences(_write(tmp_path, "0 8 2 1 2 2\n"), twin_views)


def test_build_groups_precomputed_covers_all(tmp_path, twin_views):
    cfg = GroupingConfig(strategy="precomputed", correspondence_file=str(_write(tmp_path, "0 3 4 1 7 4\n")))
    groups = build_groups(twin_views, cfg)
    assert sum(len(g) for g in groups) == 96 and len(groups) == 95
    assert with_singletons(groups).sizes.tolist() == groups.sizes.tolist()


def test_point_group_api(twin_views):
    g = build_groups_reprojection(twin_views, GroupingConfig())[0]
    assert isinstance(g, PointGroup) and g.seed == (0, (0, 0)) and g.view_ids == [0, 1]
