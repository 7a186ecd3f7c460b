import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sacfuse.evaluation import (
    EvalReport,
    accuracy,
    cloud_to_cloud,
    completeness,
    dominant_k_fraction,
    evaluate,
    f1,
    nearest_distances,
    redundancy_and_labels,
    symmetric_cloud_to_cloud,
)
from sacfuse.netlet import FusedCloud
from sacfuse.scene_io import PointCloud


def brute_nn(q, t):
    return np.sqrt(((q[:, None, :] - t[None, :, :]) ** 2).sum(-1)).min(1)


def test_accuracy_hand_cases():
    assert accuracy(np.array([[0, 0, 0], [0, 0, 10.0]]), np.zeros((1, 3)), 1.0) == 0.5
    pts = np.random.default_rng(0).normal(size=(20, 3))
    assert accuracy(pts, pts, 1e-9) == 1.0 and completeness(pts, pts, 1e-9) == 1.0
    with pytest.raises(ValueError):
        accuracy(pts, np.zeros((0, 3)), 1.0)


def test_completeness_hand_case():
    assert completeness(np.zeros((1, 3)), np.array([[0, 0, 0], [5, 0, 0.0]]), 1.0) == 0.5
    with pytest.raises(ValueError):
        completeness(np.zeros((0, 3)), np.zeros((1, 3)), 1.0)


def test_threshold_is_strict():
    assert accuracy(np.array([[1.0, 0, 0]]), np.zeros((1, 3)), 1.0) == 0.0


def test_accuracy_37_of_100(rng):
    ref = np.stack(np.meshgrid(np.linspace(-1, 1, 41), np.linspace(-1, 1, 41), [0.0]), -1).reshape(-1, 3)
    recon = np.column_stack([rng.uniform(-0.5, 0.5, (100, 2)), rng.uniform(0.01, 1.0, 100)])
    d = np.sort(brute_nn(recon, ref))
    t = 0.5 * (d[36] + d[37])
    assert accuracy(recon, ref, t) == 0.37


def test_f1_cases():
    assert f1(0.5, 0.5) == 0.5
    assert abs(f1(0.8, 0.4) - 8 / 15) <= 1e-12
    assert f1(0, 0.9) == 0 and f1(0, 0) == 0
    with pytest.raises(ValueError):
        f1(1.2, 0.5)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0, 1), c=st.floats(0, 1))
def test_f1_properties(a, c):
    assert f1(a, c) == f1(c, a)
    assert abs(f1(a, a) - a) <= 1e-15
    assert 0 <= f1(a, c) <= 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 300), m=st.integers(1, 300))
def test_nn_matches_brute_force(seed, n, m):
    rng = np.random.default_rng(seed)
    q, t = rng.uniform(-1, 1, (n, 3)), rng.uniform(-1, 1, (m, 3))
    assert np.array_equal(nearest_distances(q, t), brute_nn(q, t))


def test_monotone_in_threshold(rng):
    a, b = rng.normal(size=(200, 3)), rng.normal(size=(150, 3))
    ts = np.linspace(0.01, 2, 30)
    acc = [accuracy(a, b, t) for t in ts]
    com = [completeness(a, b, t) for t in ts]
    assert acc == sorted(acc) and com == sorted(com)


def test_cloud_to_cloud_cases():
    pts = np.random.default_rng(1).normal(size=(50, 3))
    assert cloud_to_cloud(pts, pts) == (0.0, 0.0)
    assert cloud_to_cloud(np.zeros((1, 3)), np.array([[0, 3.0, 0]]))[0] == 3.0
    g = np.stack(np.meshgrid(np.arange(0, 5, 0.01), np.arange(0, 5, 0.01), [0.0]), -1).reshape(-1, 3)
    inner = g[(g[:, 0] > 1) & (g[:, 0] < 4) & (g[:, 1] > 1) & (g[:, 1] < 4)]
    mean, mae = cloud_to_cloud(inner + [0.1, 0, 0.1], g + [0.1, 0, 0])
    assert abs(mean - 0.1) < 1e-6 and mean == mae
    spaced = np.arange(30.0)[:, None] * [5.0, 0, 0]
    assert symmetric_cloud_to_cloud(spaced, spaced + [0, 0, 0.2]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        cloud_to_cloud(np.zeros((0, 3)), pts)


def test_redundancy_and_labels():
    ins = [np.zeros((500, 3)), np.zeros((500, 3))]
    fused = FusedCloud(np.zeros((820, 3)), np.full(820, 3))
    r = redundancy_and_labels(ins, fused)
    assert r["redundancy_reduction"] == pytest.approx(0.18)
    assert r["dominant_k_fraction"][1] == 1.0 and r["label_histogram"] == {3: 820}
    uniform = {v: 10 for v in range(27)}
    assert dominant_k_fraction(uniform, 4) == pytest.approx(4 / 27)


def test_report_serialization(rng):
    recon = PointCloud(rng.normal(size=(30, 3)), labels=rng.integers(0, 3, 30))
    reports = evaluate(recon, recon, [0.02, 0.05])
    assert [r.threshold for r in reports] == [0.02, 0.05]
    assert all(r.f1 == 1.0 for r in reports)
    d = json.loads(reports[0].to_json())
    assert list(d) == [f for f in EvalReport.__dataclass_fields__]
    text = reports[0].to_text()
    assert text.startswith("threshold: 0.02\naccuracy: 1.0\n")
    with pytest.raises(ValueError):
        evaluate(recon, recon, [0.0])
