import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from referencing import Registry, Resource

from egomotion import io, scene_sim
from egomotion.cli import main
from egomotion.trajectory import PoseSample

from pathlib import Path

DOCS = Path(__file__).resolve().parents[1] / "docs"


def _validator(name):
    schemas = {p.name: json.loads(p.read_text()) for p in DOCS.glob("*.schema.json")}
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values()
    )
    return jsonschema.Draft202012Validator(schemas[name], registry=registry)


def run(*argv):
    return main(["--quiet", *map(str, argv)])


@pytest.fixture(scope="module")
def example(tmp_path_factory):
    d = tmp_path_factory.mktemp("example")
    assert run("--out-dir", d, "scenario", "--example") == 0
    assert run("--out-dir", d, "synth", "--poses", d / "poses.csv", "--noise", "zero") == 0
    return d


def test_synth_row_count(tmp_path):
    # 30 s at 30 fps, 901 poses spanning exactly 30 s
    poses = [PoseSample(k / 30.0, (0.01 * k, 0.0, 1.0), (1, 0, 0, 0)) for k in range(901)]
    io.write_poses(tmp_path / "p.csv", poses)
    assert run("synth", "--poses", tmp_path / "p.csv", "--out", tmp_path / "imu.csv") == 0
    imu = io.read_imu(tmp_path / "imu.csv")
    assert abs(len(imu) - 6000) <= 1
    assert imu.rate == 200.0


def test_synth_is_byte_identical(example, tmp_path):
    for noise in ("zero", "default"):
        a, b = tmp_path / f"a-{noise}.csv", tmp_path / f"b-{noise}.csv"
        for out in (a, b):
            assert run("--seed", 3, "synth", "--poses", example / "poses.csv", "--noise", noise, "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a-zero.csv").read_bytes() != (tmp_path / "a-default.csv").read_bytes()


def test_synth_noise_file(example, tmp_path):
    cfg = tmp_path / "noise.ini"
    cfg.write_text("[noise]\nsigma_a = 0\nsigma_g = 0\nsigma_ba = 0\nsigma_bg = 0\n")
    assert run("synth", "--poses", example / "poses.csv", "--noise", cfg, "--out", tmp_path / "n.csv") == 0
    assert (tmp_path / "n.csv").read_bytes() == (example / "imu.csv").read_bytes()


def test_missing_and_malformed_inputs(tmp_path, capsys):
    assert run("synth", "--poses", tmp_path / "nope.csv") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("t,px,py,pz,qw,qx,qy,qz\n0,0,0,0,1,0,0,0\n0.1,0,0,oops,1,0,0,0\n")
    assert run("synth", "--poses", bad) == 1
    assert "bad.csv:3" in capsys.readouterr().err
    cfg = tmp_path / "c.ini"
    cfg.write_text("[cascade]\nunknown = 1\n")
    assert run("--config", cfg, "fuse-check", "--no-gradient") == 1
    assert run("--config", tmp_path / "missing.ini", "fuse-check") == 2


def test_filter_example_schema(example, tmp_path):
    stats_path = tmp_path / "stats.json"
    assert run("filter", "--scene", example / "scene.json", "--poses", example / "poses.csv",
               "--imu", example / "imu.csv", "--out-stats", stats_path, "--out-keyframes", tmp_path / "kf.csv") == 0
    stats = json.loads(stats_path.read_text())
    _validator("stats.schema.json").validate(stats)
    assert "wall_time" not in stats
    assert stats["extraction_fraction"] < 0.05 and 12 <= stats["n_keyframes"] <= 35
    kf = io.read_keyframes(tmp_path / "kf.csv")
    assert [k for k, _ in kf] == stats["keyframes"]
    assert run("filter", "--scene", example / "scene.json", "--poses", example / "poses.csv",
               "--imu", example / "imu.csv", "--out-stats", stats_path, "--timing") == 0
    _validator("stats.schema.json").validate(json.loads(stats_path.read_text()))


def test_filter_static_scenario(tmp_path):
    scene_sim.generate_scene(0).save(tmp_path / "scene.json")
    R = scene_sim.look_rotation(0.3, 0.0)
    from egomotion import so3

    poses = [PoseSample(k / 30.0, (2.0, 2.0, 1.5), so3.matrix_to_quat(R)) for k in range(300)]
    io.write_poses(tmp_path / "poses.csv", poses)
    assert run("synth", "--poses", tmp_path / "poses.csv", "--noise", "zero", "--out", tmp_path / "imu.csv") == 0
    assert run("filter", "--scene", tmp_path / "scene.json", "--poses", tmp_path / "poses.csv",
               "--imu", tmp_path / "imu.csv", "--out-stats", tmp_path / "s.json",
               "--out-keyframes", tmp_path / "k.csv") == 0
    stats = json.loads((tmp_path / "s.json").read_text())
    assert stats["n_keyframes"] == 1 and stats["keyframes"] == [0] and stats["n_pass_stage1"] == 0


def test_filter_coverage_mismatch(example, tmp_path):
    lines = (example / "imu.csv").read_text().splitlines()
    (tmp_path / "short.csv").write_text("\n".join(lines[:2000]) + "\n")
    assert run("filter", "--scene", example / "scene.json", "--poses", example / "poses.csv",
               "--imu", tmp_path / "short.csv", "--out-dir", tmp_path) == 1


def test_bench_uniform_and_report_schema(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["bench", "--limit", "1", "--uniform", "uniform:32", "--drift-seeds", "2", "--out", str(out)]) == 0
    assert "walkthrough-00" in capsys.readouterr().out
    report = json.loads(out.read_text())
    _validator("report.schema.json").validate(report)
    row = report["scenarios"][0]
    assert row["uniform"]["32"] == {"n_keyframes": 32, "n_token_extractions": 32}
    if row["cascade"]["n_keyframes"] < 32:
        assert row["cascade"]["n_token_extractions"] < 32
    assert np.isfinite(report["stage1_drift"]["median_displacement_error_m"])


def test_bench_rejects_bad_inputs(tmp_path):
    empty = tmp_path / "suite.json"
    empty.write_text('{"scenarios": []}')
    assert run("bench", "--suite", empty) == 1
    assert run("bench", "--limit", "1", "--uniform", "every:3") == 1
    assert run("bench", "--suite", tmp_path / "none.json") == 2


def test_sweep_report(tmp_path):
    out = tmp_path / "sweep.json"
    assert run("sweep", "--limit", "1", "--deltas", "0,0.5", "--out", out) == 0
    report = json.loads(out.read_text())
    _validator("sweep.schema.json").validate(report)
    zero = [r for r in report["runs"] if r["delta"] == 0]
    assert len(zero) == 4 and all(r["identical_keyframes"] for r in zero)


def test_fuse_check(tmp_path):
    out = tmp_path / "check.json"
    assert run("fuse-check", "--no-gradient", "--out", out) == 0
    report = json.loads(out.read_text())
    _validator("fuse_check.schema.json").validate(report)
    assert report["passed"] and all("seconds" not in c for c in report["checks"])
    assert run("fuse-check", "--dims", "d_model=15") == 1
    assert run("fuse-check", "--dims", "heads=2") == 1
    for seed in (11, 12345):
        assert run("--seed", seed, "fuse-check", "--no-gradient") == 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "egomotion", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "egomotion" in res.stdout
