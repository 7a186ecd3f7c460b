"""Accuracy, completeness and F1 against a reference cloud, plus cloud statistics.

A point counts as close when its nearest neighbor in the other cloud is
strictly closer than the threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree


def _points(cloud) -> np.ndarray:
    pts = getattr(cloud, "points", cloud)
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def nearest_distances(query, target) -> np.ndarray:
    """Exact Euclidean distance from every query point to its nearest target point."""
    q, t = _points(query), _points(target)
    if len(t) == 0:
        raise ValueError("target cloud is empty")
    if len(q) == 0:
        return np.zeros(0)
    d, _ = cKDTree(t).query(q, k=1)
    return d


def accuracy(recon, ref, t: float) -> float:
    """Share of reconstructed points closer than ``t`` to the reference."""
    if len(_points(ref)) == 0:
        raise ValueError("reference cloud is empty")
    d = nearest_distances(recon, ref)
    return float(np.count_nonzero(d < t) / len(d)) if len(d) else 0.0


def completeness(recon, ref, t: float) -> float:
    """Share of reference points closer than ``t`` to the reconstruction."""
    if len(_points(recon)) == 0:
        raise ValueError("reconstruction is empty")
    d = nearest_distances(ref, recon)
    return float(np.count_nonzero(d < t) / len(d)) if len(d) else 0.0


def f1(a: float, c: float) -> float:
    """Harmonic mean of accuracy and completeness; 0 when both are 0."""
    if not (0 <= a <= 1 and 0 <= c <= 1):
        raise ValueError(f"fractions must lie in [0, 1], got {a}, {c}")
    return 0.0 if a + c == 0 else 2 * a * c / (a + c)


def cloud_to_cloud(a, b) -> tuple[float, float]:
    """Mean nearest-neighbor distance from ``a`` to ``b``, returned as (mean, mae).

    The distances are nonnegative, so both values coincide.
    """
    if len(_points(a)) == 0 or len(_points(b)) == 0:
        raise ValueError("cloud_to_cloud needs two nonempty clouds")
    m = float(nearest_distances(a, b).mean())
    return m, m


def symmetric_cloud_to_cloud(a, b) -> float:
    """Average of the two directed cloud-to-cloud means."""
    return 0.5 * (cloud_to_cloud(a, b)[0] + cloud_to_cloud(b, a)[0])


def label_histogram(labels) -> dict[int, int]:
    ids, counts = np.unique(np.asarray(labels, dtype=np.int64), return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}


def dominant_k_fraction(histogram: dict[int, int], k: int) -> float:
    """Share of points held by the ``k`` most used labels."""
    counts = sorted(histogram.values(), reverse=True)
    total = sum(counts)
    return sum(counts[:k]) / total if total else 0.0


def redundancy_and_labels(input_clouds, fused) -> dict:
    """Reduction ratio and label statistics of a fused cloud."""
    n_in = sum(len(_points(c)) for c in input_clouds)
    labels = getattr(fused, "labels", None)
    if labels is None:
        raise ValueError("fused cloud carries no labels")
    n_out = len(_points(fused))
    hist = label_histogram(labels)
    return {
        "input_points": int(n_in),
        "output_points": int(n_out),
        "redundancy_reduction": 1.0 - n_out / n_in if n_in else 0.0,
        "label_histogram": hist,
        "dominant_k_fraction": {k: dominant_k_fraction(hist, k) for k in range(1, len(hist) + 1)},
    }


@dataclass
class EvalReport:
    threshold: float
    accuracy: float
    completeness: float
    f1: float
    mean_cloud_to_cloud: float
    mae: float
    input_points: int = 0
    output_points: int = 0
    redundancy_reduction: float = 0.0
    label_histogram: dict = field(default_factory=dict)
    dominant_k_fraction: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["label_histogram"] = {str(k): v for k, v in self.label_histogram.items()}
        d["dominant_k_fraction"] = {str(k): v for k, v in self.dominant_k_fraction.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, dict):
                v = " ".join(f"{a}={b}" for a, b in v.items())
            lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"


def evaluate(recon, ref, thresholds, input_points: int | None = None) -> list[EvalReport]:
    """One report per threshold; nearest-neighbor queries are shared."""
    r, g = _points(recon), _points(ref)
    if len(g) == 0:
        raise ValueError("reference cloud is empty")
    if len(r) == 0:
        raise ValueError("reconstruction is empty")
    d_acc = nearest_distances(r, g)
    d_com = nearest_distances(g, r)
    mean = float(d_acc.mean())
    labels = getattr(recon, "labels", None)
    hist = label_histogram(labels) if labels is not None else {}
    n_in = len(r) if input_points is None else int(input_points)
    reports = []
    for t in thresholds:
        if not t > 0:
            raise ValueError(f"thresholds must be positive, got {t}")
        a = float(np.count_nonzero(d_acc < t) / len(d_acc))
        c = float(np.count_nonzero(d_com < t) / len(d_com))
        reports.append(EvalReport(
            threshold=float(t), accuracy=a, completeness=c, f1=f1(a, c),
            mean_cloud_to_cloud=mean, mae=mean,
            input_points=n_in, output_points=len(r),
            redundancy_reduction=1.0 - len(r) / n_in if n_in else 0.0,
            label_histogram=hist,
            dominant_k_fraction={k: dominant_k_fraction(hist, k) for k in range(1, len(hist) + 1)},
        ))
    return reports
