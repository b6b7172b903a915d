"""Command-line interface: run, eval, render, bench."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from curtainsim import kernels
from curtainsim.cli import bench_throughput, main
from curtainsim.config import load_config

TINY = {
    "geometry": {
        "width": 16, "height": 16, "cell_size": 0.15,
        "num_rays": 16, "r_min": 0.3, "r_max": 3.0,
    },
    "particles": 4,
    "steps": 20,
    "eval_every": 5,
    "seed": 3,
}


def write_cfg(path, **over):
    data = dict(TINY)
    data.update(over)
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """One mab run (with snapshots) and one random run, built via the CLI."""
    root = tmp_path_factory.mktemp("runs")
    snap_cfg = write_cfg(root / "snap.json", snapshot_every=5)
    bare_cfg = write_cfg(root / "bare.json")
    mab_dir = root / "mab"
    rand_dir = root / "random"
    assert main(["run", "--config", str(snap_cfg), "--policy", "mab",
                 "--out", str(mab_dir)]) == 0
    assert main(["run", "--config", str(bare_cfg), "--policy", "random",
                 "--seed", "4", "--out", str(rand_dir)]) == 0
    return mab_dir, rand_dir


class TestRunCommand:
    def test_writes_the_output_tree(self, runs, capsys):
        mab_dir, _ = runs
        assert (mab_dir / "run.json").is_file()
        assert (mab_dir / "final.grid").is_file()
        lines = (mab_dir / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 20
        meta = json.loads((mab_dir / "run.json").read_text())
        assert meta["policy"] == "mab"
        assert meta["seed"] == 3

    def test_flag_overrides_reach_the_config(self, runs):
        _, rand_dir = runs
        meta = json.loads((rand_dir / "run.json").read_text())
        assert meta["policy"] == "random"
        assert meta["seed"] == 4

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "cfg.json", steps=10)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["run", "--config", str(cfg), "--policy", "mab",
                         "--out", str(out)]) == 0
            outs.append(out)
        assert (outs[0] / "metrics.jsonl").read_bytes() == \
            (outs[1] / "metrics.jsonl").read_bytes()
        assert (outs[0] / "final.grid").read_bytes() == \
            (outs[1] / "final.grid").read_bytes()

    def test_summary_line(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "cfg.json", steps=5)
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        out = capsys.readouterr().out
        assert "5 steps" in out

    def test_missing_out_flag_exits_2(self, capsys):
        assert main(["run"]) == 2

    def test_bad_config_reports_an_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(dict(TINY, curtains=9)))
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "unknown" in err


class TestEvalCommand:
    def test_aggregates_runs_into_a_table(self, runs, capsys):
        mab_dir, rand_dir = runs
        assert main(["eval", "--runs", str(mab_dir), str(rand_dir)]) == 0
        out = capsys.readouterr().out
        assert "policy" in out and "f1" in out and "iou" in out
        assert "mab" in out and "random" in out
        # a mab run triggers the arm-usage table
        for arm in ("depth_prob", "occ_entropy", "vel_entropy", "combined"):
            assert arm in out

    def test_run_without_evals_is_rejected(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "cfg.json", steps=5, eval_every=0)
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["eval", "--runs", str(out)]) == 2
        assert "no evaluation records" in capsys.readouterr().err

    def test_non_run_directory_is_rejected(self, tmp_path, capsys):
        assert main(["eval", "--runs", str(tmp_path)]) == 2
        assert capsys.readouterr().err.startswith("error:")


class TestRenderCommand:
    def test_renders_snapshots_to_ppm_frames(self, runs, capsys):
        mab_dir, _ = runs
        assert main(["render", "--run", str(mab_dir)]) == 0
        frames = sorted((mab_dir / "frames").glob("frame_*.ppm"))
        assert len(frames) == 4  # snapshots every 5 steps over 20
        head = frames[0].read_bytes()[:15]
        assert head.startswith(b"P6\n16 16\n255\n")

    def test_fps_drops_frames(self, runs, tmp_path, capsys):
        # snapshots land 1/6 s apart; at 4 fps only every other one survives
        mab_dir, _ = runs
        out = tmp_path / "fr"
        assert main(["render", "--run", str(mab_dir), "--fps", "4",
                     "--out", str(out)]) == 0
        assert "wrote 2 frame(s)" in capsys.readouterr().out
        assert len(list(out.glob("frame_*.ppm"))) == 2

    def test_scale_multiplies_the_image(self, runs, tmp_path, capsys):
        mab_dir, _ = runs
        out = tmp_path / "fr2"
        assert main(["render", "--run", str(mab_dir), "--scale", "3",
                     "--out", str(out)]) == 0
        head = next(out.glob("frame_*.ppm")).read_bytes()[:15]
        assert head.startswith(b"P6\n48 48\n255\n")

    def test_falls_back_to_the_final_grid(self, runs, tmp_path, capsys):
        _, rand_dir = runs  # no snapshots requested in this run
        out = tmp_path / "fr3"
        assert main(["render", "--run", str(rand_dir), "--out", str(out)]) == 0
        assert len(list(out.glob("frame_*.ppm"))) == 1

    def test_empty_directory_is_rejected(self, tmp_path, capsys):
        assert main(["render", "--run", str(tmp_path)]) == 2
        assert "no snapshots" in capsys.readouterr().err

    def test_nonpositive_fps_is_rejected(self, runs, capsys):
        mab_dir, _ = runs
        assert main(["render", "--run", str(mab_dir), "--fps", "0"]) == 2
        assert "fps" in capsys.readouterr().err


class TestBenchCommand:
    def test_reports_every_backend(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "cfg.json")
        assert main(["bench", "--config", str(cfg), "--cycles", "3"]) == 0
        out = capsys.readouterr().out
        for name in kernels.available_backends():
            assert f"motion_update[{name}]:" in out
        assert "measurement_update:" in out
        assert "placement[depth_prob]:" in out
        assert "cycle (motion+measurement" in out

    def test_throughput_dict(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path / "cfg.json"))
        res = bench_throughput(cfg, cycles=3)
        assert res["backend"] == kernels.BACKEND
        assert set(res["motion_update_per_s"]) == set(kernels.available_backends())
        assert all(rate > 0 for rate in res["motion_update_per_s"].values())
        assert res["measurement_update_per_s"] > 0
        assert res["cycle_per_s"] > 0
        assert set(res["placement_per_s"]) == {
            "depth_prob", "occ_entropy", "vel_entropy", "combined",
        }


class TestConsoleScript:
    def test_installed_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-c",
             "import curtainsim.cli as c, sys; sys.exit(c.main(['--help']))"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "usage: curtainsim" in proc.stdout
        assert all(cmd in proc.stdout for cmd in ("run", "eval", "render", "bench"))
