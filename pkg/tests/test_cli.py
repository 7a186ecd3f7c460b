import json

import numpy as np
import pytest

from sacfuse.cli import main
from sacfuse.scene_io import load_point_cloud, write_camera_set

from conftest import make_view


@pytest.fixture
def twin_dir(tmp_path, twin_views):
    d = tmp_path / "twin"
    write_camera_set(d, twin_views)
    return d


def _spec(tmp_path, **kw):
    data = dict(surface="plane", camera_count=3, ring_radius=0.25, width=40, height=30, fx=40.0, fy=40.0,
                per_view_bias=[0.0, 0.05, -0.05], noise_sigma=0.005, seed=3)
    data.update(kw)
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(data))
    return p


def test_synth_writes_scene(tmp_path):
    out = tmp_path / "scene"
    assert main(["synth", str(_spec(tmp_path)), str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["reference.ply"] + [f"view_{k}.{e}" for k in range(3) for e in ("cam", "pfm")]


def test_synth_bad_key(tmp_path, capsys):
    assert main(["synth", str(_spec(tmp_path, cameras=4)), str(tmp_path / "x")]) != 0
    assert "cameras" in capsys.readouterr().err


def test_synth_zero_cameras(tmp_path, capsys):
    assert main(["synth", str(_spec(tmp_path, camera_count=0, per_view_bias=[])), str(tmp_path / "x")]) == 2
    assert "camera_count" in capsys.readouterr().err


@pytest.mark.parametrize("method, args, count", [
    ("sac", [], 48), ("concat", [], 96), ("consistency", [], 48), ("multiray", ["--min-rays", "3"], 96),
])
def test_fuse_methods(twin_dir, tmp_path, method, args, count):
    out = tmp_path / f"{method}.ply"
    assert main(["fuse", str(twin_dir), "--method", method, "-o", str(out)] + args) == 0
    assert len(load_point_cloud(out)) == count
    stats = json.loads((tmp_path / f"{method}.ply.stats.json").read_text())
    assert stats["output_points"] == count and stats["input_points"] == 96


def test_multiray_passthrough_keeps_members(twin_dir, tmp_path):
    main(["fuse", str(twin_dir), "--method", "concat", "-o", str(tmp_path / "c.ply")])
    main(["fuse", str(twin_dir), "--method", "multiray", "--min-rays", "3", "-o", str(tmp_path / "m.ply")])
    a, b = load_point_cloud(tmp_path / "c.ply"), load_point_cloud(tmp_path / "m.ply")
    assert np.array_equal(np.sort(a.points, axis=0), np.sort(b.points, axis=0))


def test_config_file_and_override(twin_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "concat", "tau": 1.0}))
    out = tmp_path / "o.ply"
    assert main(["fuse", str(twin_dir), "--config", str(cfg), "-o", str(out)]) == 0
    assert len(load_point_cloud(out)) == 96
    assert main(["fuse", str(twin_dir), "--config", str(cfg), "--method", "sac", "-o", str(out)]) == 0
    assert len(load_point_cloud(out)) == 48
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["fuse", str(twin_dir), "--config", str(cfg), "-o", str(out)]) == 1


def test_usage_and_data_errors(tmp_path, twin_dir):
    assert main([]) == 1
    assert main(["fuse", str(twin_dir)]) == 1
    assert main(["fuse", str(twin_dir), "--method", "magic", "-o", "x.ply"]) == 1
    assert main(["fuse", str(tmp_path / "missing"), "-o", str(tmp_path / "x.ply")]) == 2
    assert main(["eval", str(tmp_path / "nope.ply"), str(tmp_path / "nope.ply")]) == 2


def test_eval_identity_and_rows(twin_dir, tmp_path, capsys):
    out = tmp_path / "c.ply"
    main(["fuse", str(twin_dir), "--method", "concat", "-o", str(out)])
    capsys.readouterr()
    rep = tmp_path / "r.json"
    txt = tmp_path / "r.txt"
    assert main(["eval", str(out), str(out), "--thresholds", "0.02,0.05", "--report", str(rep), "--text", str(txt)]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[1].split()[1:] == ["1.0000/1.0000/1.0000"] * 2
    rows = json.loads(rep.read_text())
    assert [r["threshold"] for r in rows] == [0.02, 0.05] and all(r["f1"] == 1.0 for r in rows)
    assert txt.read_text().count("f1: 1.0") == 2


def test_eval_bad_thresholds(twin_dir, tmp_path):
    out = tmp_path / "c.ply"
    main(["fuse", str(twin_dir), "--method", "concat", "-o", str(out)])
    assert main(["eval", str(out), str(out), "--thresholds", "0,0.05"]) == 2


def test_report(tmp_path, capsys):
    scene = tmp_path / "scene"
    main(["synth", str(_spec(tmp_path)), str(scene)])
    capsys.readouterr()
    js = tmp_path / "all.json"
    assert main(["report", str(scene), str(scene / "reference.ply"), "--thresholds", "0.01,0.02",
                 "--reprojection-tol", "0.03", "--json", str(js)]) == 0
    out = capsys.readouterr().out
    for m in ("sac", "consistency", "multiray", "concat"):
        assert m in out
    assert set(json.loads(js.read_text())) == {"sac", "consistency", "multiray", "concat"}
    assert main(["report", str(scene), str(scene / "reference.ply"), "--methods", "sac,nope"]) == 1


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "sacfuse", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "synth" in r.stdout
