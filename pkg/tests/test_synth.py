import math

import numpy as np
import pytest

from sacfuse.geometry import view_points
from sacfuse.synth import (
    RayMissError,
    SceneSpec,
    camera_poses,
    generate_scene,
    load_scene_spec,
    perfect_depth_oracle,
    pixel_uniforms,
    surface_distance,
)


def one_cam(**kw):
    base = dict(camera_count=1, ring_radius=0.0, width=40, height=30, fx=40.0, fy=40.0)
    base.update(kw)
    return SceneSpec(**base)


def test_plane_constant_depth():
    views, ref = generate_scene(one_cam())
    assert np.all(views[0].depth.values == 10.0)
    assert len(ref) > 4 * 40 * 30 * 0.9


def test_plane_bias():
    views, _ = generate_scene(one_cam(per_view_bias=(0.05,)))
    assert np.allclose(views[0].depth.values, 10.05, rtol=0, atol=1e-12)


def test_sphere_principal_ray():
    spec = one_cam(surface="sphere", width=41, height=31)
    assert perfect_depth_oracle(spec, 0, (20, 15)) == pytest.approx(8.0, abs=1e-12)
    views, _ = generate_scene(spec)
    assert views[0].depth.values[15, 20] == pytest.approx(8.0, abs=1e-12)


def test_oracle_z_depth_convention():
    spec = one_cam()
    assert perfect_depth_oracle(spec, 0, (19.5, 14.5)) == 10.0
    # off-axis ray: ray length would be 10 / cos(theta), z-depth stays 10
    assert perfect_depth_oracle(spec, 0, (39.0, 29.0)) == pytest.approx(10.0, abs=1e-12)


def test_sphere_tangent_ray_misses():
    spec = one_cam(surface="sphere", width=101, height=31, fx=40.0)
    tan = 2.0 / math.sqrt(96.0)
    with pytest.raises(RayMissError):
        perfect_depth_oracle(spec, 0, (50 + 40.0 * tan, 15))
    with pytest.raises(ValueError):
        perfect_depth_oracle(spec, 0, (200, 15))


@pytest.mark.parametrize("surface", ["plane", "sphere", "step_roof"])
def test_noise_free_points_on_surface(surface):
    spec = SceneSpec(surface=surface, camera_count=3, ring_radius=1.0, width=60, height=45, fx=40.0, fy=40.0,
                     reference_density=1.0)
    views, ref = generate_scene(spec)
    for k, v in enumerate(views):
        rows, cols, depths, pts = view_points(v)
        assert surface_distance(spec, pts).max() < 1e-9
        for r, c in list(zip(rows, cols))[:: max(1, len(rows) // 25)]:
            assert abs(perfect_depth_oracle(spec, k, (c, r)) - v.depth.values[r, c]) <= 1e-9
    assert surface_distance(spec, ref.points).max() < 1e-9


def test_bias_shows_in_mean_offset():
    spec = one_cam(per_view_bias=(0.07,), noise_sigma=0.01, seed=4)
    views, _ = generate_scene(spec)
    d = views[0].depth.values - 10.0
    assert abs(d.mean() - 0.07) < 3 * 0.01 / math.sqrt(d.size)
    assert abs(d.std() - 0.01) < 0.001


def test_outliers():
    spec = one_cam(outlier_fraction=0.2, outlier_magnitude=1.0, seed=2)
    d = generate_scene(spec)[0][0].depth.values
    frac = np.mean(np.abs(d - 10) > 0.5)
    assert abs(frac - 0.2) < 0.05
    assert set(np.round(np.unique(d), 9).tolist()) == {9.0, 10.0, 11.0}


def test_deterministic_and_seeded():
    spec = one_cam(noise_sigma=0.01, seed=9)
    a = generate_scene(spec)[0][0].depth.values
    assert np.array_equal(a, generate_scene(spec)[0][0].depth.values)
    b = generate_scene(one_cam(noise_sigma=0.01, seed=10))[0][0].depth.values
    assert not np.array_equal(a, b)


def test_prng_reference_values():
    # first draws of the per-pixel streams, frozen from a scalar Python implementation
    mask = (1 << 64) - 1

    def splitmix(x):
        x = (x + 0x9E3779B97F4A7C15) & mask
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & mask
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & mask
        return x ^ (x >> 31)

    def stream(seed, view, pixel, n):
        s = splitmix(splitmix(splitmix(seed) ^ view) ^ pixel) or 1
        out = []
        for _ in range(n):
            s ^= s >> 12
            s = (s ^ (s << 25)) & mask
            s ^= s >> 27
            out.append(((s * 0x2545F4914F6CDD1D) & mask) >> 11)
        return [x * 2.0**-53 for x in out]

    got = pixel_uniforms(7, 3, 5, 4)
    for p in range(5):
        assert got[:, p].tolist() == stream(7, 3, p, 4)


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        SceneSpec(camera_count=0)
    with pytest.raises(ValueError):
        SceneSpec(noise_sigma=-1)
    with pytest.raises(ValueError):
        SceneSpec(outlier_fraction=1.0)
    with pytest.raises(ValueError):
        SceneSpec(per_view_bias=(0.1,), camera_count=2)
    p = tmp_path / "s.json"
    p.write_text('{"surface": "sphere", "sphere_radius": 1.5, "colour": 1}')
    with pytest.raises(ValueError, match="colour"):
        load_scene_spec(p)
    p.write_text('{"surface": "sphere", "sphere_radius": 1.5}')
    assert load_scene_spec(p).sphere_radius == 1.5


def test_invisible_surface():
    with pytest.raises(ValueError, match="camera 0"):
        generate_scene(one_cam(plane_z=-5.0))


def test_strip_layout_overlap():
    spec = SceneSpec(layout="strip", camera_count=3, baseline=4.0, width=50, height=20, fx=50.0, fy=50.0)
    centers = [p.center for p in camera_poses(spec)]
    assert np.allclose([c[0] for c in centers], [-4, 0, 4])
    # footprint width 10 m, so adjacent views overlap by 60%
    views, _ = generate_scene(spec)
    xs = [view_points(v)[3][:, 0] for v in views]
    overlap = (xs[0].max() - xs[1].min()) / (xs[0].max() - xs[0].min())
    assert overlap == pytest.approx(0.6, abs=0.03)
