import numpy as np
import pytest

from sacfuse.scene_io import CameraIntrinsics, CameraView, DepthMap, Pose
from sacfuse.synth import SceneSpec

BIASES = (0.0, 0.05, -0.05, 0.10, -0.10)
SIGMA = 0.005


def make_view(view_id=0, depth=None, width=8, height=6, f=10.0, center=(0.0, 0.0, 0.0), image=None):
    """Camera looking down +z from ``center`` with a constant or given depth raster."""
    K = CameraIntrinsics(f, f, (width - 1) / 2, (height - 1) / 2, width, height)
    if depth is None:
        depth = 10.0
    values = np.broadcast_to(np.asarray(depth, dtype=np.float64), (height, width)).copy()
    pose = Pose(np.eye(3), -np.asarray(center, dtype=np.float64))
    return CameraView(view_id, K, pose, DepthMap(values), image)


def bias_spec(**kw):
    """The plane experiment with five biased cameras on a small ring."""
    base = dict(surface="plane", plane_z=10.0, camera_count=5, ring_radius=0.25,
                per_view_bias=BIASES, noise_sigma=SIGMA, seed=1, reference_density=16.0)
    base.update(kw)
    return SceneSpec(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def twin_views():
    depth = 10.0 + 0.01 * np.arange(48).reshape(6, 8)
    return [make_view(0, depth), make_view(1, depth)]


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    """Print and remember one acceptance verdict line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
