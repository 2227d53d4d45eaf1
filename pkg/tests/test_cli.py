import json
import subprocess
import sys

import numpy as np
import pytest

from branched_svgd.artifacts import TRACE_COLUMNS, read_json, read_metrics, read_trace, read_trace_entries
from branched_svgd.cli import main
from branched_svgd.core import Color, ParticleCloud, read_snapshot, write_snapshot

SMALL_BSVGD = ["--set", "bsvgd.max_population=40", "--set", "metrics.replicates=2"]
SMALL_SVGD = ["--set", "svgd.initial.count=30", "--set", "svgd.max_iterations=120",
              "--set", "metrics.replicates=2"]


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def bsvgd_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("b") / "run"
    assert run("run", "--config", "paper-gauss25-bsvgd.toml", "--seed", 7, "--out", out, *SMALL_BSVGD) == 0
    return out


@pytest.fixture(scope="module")
def svgd_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("s") / "run"
    assert run("run", "--config", "paper-gauss25-svgd", "--out", out, "--snapshot-every", 20, *SMALL_SVGD) == 0
    return out


class TestRun:
    def test_artifacts(self, bsvgd_dir):
        for name in ("trace.csv", "metrics.csv", "run.json"):
            assert (bsvgd_dir / name).is_file()
        rows = read_trace(bsvgd_dir)
        assert len(rows) >= 2
        assert (bsvgd_dir / "trace.csv").read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
        for row in rows:
            assert (bsvgd_dir / row.snapshot_file).is_file()

    def test_run_json(self, bsvgd_dir):
        meta = read_json(bsvgd_dir / "run.json")
        assert meta["seed"] == 7
        assert meta["algorithm"] == "bsvgd"
        assert len(meta["config_sha256"]) == 64
        assert meta["config"]["bsvgd"]["max_population"] == 40
        assert meta["version"]
        assert meta["total_wall_time_s"] >= meta["algorithm_wall_time_s"] > 0
        assert meta["final_sample_size"] > 40

    def test_round_trip(self, bsvgd_dir):
        entries = read_trace_entries(bsvgd_dir)
        rows = read_trace(bsvgd_dir)
        metrics = read_metrics(bsvgd_dir / "metrics.csv")
        assert [e.sample_size for e in entries] == [r.sample_size for r in rows]
        assert [p.sample_size for p in metrics] == [r.sample_size for r in rows]
        assert [p.wall_time for p in metrics] == [r.wall_time_s for r in rows]
        assert all(len(p.replicates) == 2 for p in metrics)
        for e in entries:
            if e.phase == "post-branch":
                assert e.cloud.count(Color.SPINE) == 1

    def test_config_reproducible_from_run_json(self, bsvgd_dir, tmp_path):
        from branched_svgd.config import RunConfig

        meta = read_json(bsvgd_dir / "run.json")
        assert RunConfig(meta["config"]).sha256() == meta["config_sha256"]

    def test_same_seed_work_clock_byte_identical(self, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert run("run", "--config", "paper-gauss25-bsvgd", "--seed", 3, "--out", out,
                       "--clock", "work", *SMALL_BSVGD) == 0
        for name in ("trace.csv", "metrics.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_svgd_run(self, svgd_dir):
        rows = read_trace(svgd_dir)
        assert [r.phase for r in rows[:-1]] == ["svgd-iter"] * (len(rows) - 1)
        assert rows[-1].phase == "post-svgd"
        assert all(r.sample_size == 30 for r in rows)

    def test_svgd_preset_sample_size(self, tmp_path):
        out = tmp_path / "s500"
        assert run("run", "--config", "paper-gauss25-svgd", "--out", out, "--no-metrics",
                   "--set", "svgd.max_iterations=5") == 0
        final = read_trace(out)[-1]
        assert len(read_snapshot(out / final.snapshot_file)) == 500

    def test_algorithm_flag(self, tmp_path):
        out = tmp_path / "alg"
        assert run("run", "--config", "paper-gauss25-bsvgd", "--algorithm", "svgd", "--out", out,
                   "--no-metrics", "--set", "svgd.initial.count=10", "--set", "svgd.max_iterations=5") == 0
        assert read_json(out / "run.json")["algorithm"] == "svgd"

    def test_banana_preset_runs(self, tmp_path):
        out = tmp_path / "banana"
        assert run("run", "--config", "paper-banana3-bsvgd", "--out", out, *SMALL_BSVGD) == 0
        assert read_json(out / "run.json")["final_sample_size"] > 40

    def test_replicas(self, tmp_path):
        out = tmp_path / "reps"
        assert run("run", "--config", "paper-gauss25-bsvgd", "--seed", 10, "--replicas", 2, "--out", out,
                   "--no-metrics", "--set", "bsvgd.max_population=20") == 0
        seeds = [read_json(out / f"replica_{k:03d}" / "run.json")["seed"] for k in range(2)]
        assert seeds == [10, 11]

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('algorithm = "bsvgd"\n[svgd]\nthreshold = "high"\n')
        assert run("run", "--config", bad, "--out", tmp_path / "o") == 2
        assert f"{bad}:3:" in capsys.readouterr().err

    def test_unknown_config(self, tmp_path):
        assert run("run", "--config", "nope", "--out", tmp_path / "o") == 2

    def test_divergence_exit_code(self, tmp_path, capsys):
        out = tmp_path / "div"
        code = run("run", "--config", "paper-gauss25-svgd", "--out", out, "--no-metrics",
                   "--set", "svgd.initial.count=5",
                   "--set", 'target={type="gaussian_mixture", means=[[0, 0]], variance=1e-300}')
        assert code == 3
        assert "divergent" in capsys.readouterr().err

    def test_usage_error(self):
        assert run("run") == 2
        assert run("frobnicate") == 2


class TestWasserstein:
    def write(self, path, rows):
        write_snapshot(path, ParticleCloud(np.asarray(rows, dtype=float)))
        return path

    def test_self(self, tmp_path, capsys):
        a = self.write(tmp_path / "a.csv", [[0.0, 1.0], [2.0, 3.0]])
        assert run("wasserstein", a, a) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_single_rows(self, tmp_path, capsys):
        a = self.write(tmp_path / "a.csv", [[0.0, 0.0]])
        b = self.write(tmp_path / "b.csv", [[3.0, 4.0]])
        assert run("wasserstein", a, b) == 0
        assert capsys.readouterr().out.strip() == "5"

    def test_line_example(self, tmp_path, capsys):
        a = self.write(tmp_path / "a.csv", [[0.0], [1.0], [2.0]])
        b = self.write(tmp_path / "b.csv", [[0.5], [1.5], [2.5]])
        assert run("wasserstein", a, b) == 0
        assert float(capsys.readouterr().out) == pytest.approx(0.5, abs=1e-12)

    def test_twelve_digits(self, tmp_path, capsys):
        a = self.write(tmp_path / "a.csv", [[0.0, 0.0]])
        b = self.write(tmp_path / "b.csv", [[1.0, 1.0]])
        run("wasserstein", a, b)
        assert capsys.readouterr().out.strip() == "1.41421356237"

    def test_size_mismatch(self, tmp_path):
        a = self.write(tmp_path / "a.csv", [[0.0, 0.0]])
        b = self.write(tmp_path / "b.csv", [[3.0, 4.0], [1.0, 1.0]])
        assert run("wasserstein", a, b) == 2

    def test_dimension_mismatch(self, tmp_path):
        a = self.write(tmp_path / "a.csv", [[0.0, 0.0]])
        b = self.write(tmp_path / "b.csv", [[3.0]])
        assert run("wasserstein", a, b) == 2

    def test_unreadable(self, tmp_path):
        assert run("wasserstein", tmp_path / "missing.csv", tmp_path / "missing.csv") == 2


class TestReport:
    def test_single_run(self, bsvgd_dir, tmp_path):
        assert run("report", bsvgd_dir, "--out", tmp_path) == 0
        lines = (tmp_path / "report.csv").read_text().splitlines()
        metrics = (bsvgd_dir / "metrics.csv").read_text().splitlines()
        assert len(lines) == len(metrics)
        header = lines[0].split(",")
        assert header[:5] == ["algorithm", "run", "seed", "clock", "svgd_convergence_time_s"]
        assert header[5:] == metrics[0].split(",")
        # metric columns are carried over verbatim
        for rep, met in zip(lines[1:], metrics[1:]):
            assert rep.split(",")[5:] == met.split(",")

    def test_pair(self, bsvgd_dir, svgd_dir, tmp_path):
        assert run("report", svgd_dir, bsvgd_dir, "--out", tmp_path) == 0
        summary = json.loads((tmp_path / "report.json").read_text())
        marker = summary["svgd_convergence_time_s"]
        assert marker == read_trace(svgd_dir)[-1].wall_time_s
        algos = {r["algorithm"] for r in summary["runs"]}
        assert algos == {"svgd", "bsvgd"}
        bs = next(r for r in summary["runs"] if r["algorithm"] == "bsvgd")
        assert bs["w_at_svgd_convergence"] is not None and np.isfinite(bs["w_at_svgd_convergence"])
        rows = (tmp_path / "report.csv").read_text().splitlines()[1:]
        assert {r.split(",")[0] for r in rows} == {"svgd", "bsvgd"}

    def test_missing_metrics(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert run("report", tmp_path / "empty", "--out", tmp_path) == 2


class TestPresets:
    def test_list(self, capsys):
        assert run("presets") == 0
        out = capsys.readouterr().out
        for name in ("paper-gauss25-bsvgd", "paper-gauss25-svgd", "paper-banana3-bsvgd", "paper-banana3-svgd"):
            assert f"### {name}" in out

    def test_single(self, capsys):
        assert run("presets", "paper-gauss25-svgd") == 0
        assert 'algorithm = "svgd"' in capsys.readouterr().out

    def test_unknown(self):
        assert run("presets", "nope") == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "branched_svgd.cli", "presets", "paper-gauss25-bsvgd"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "max_population = 500" in proc.stdout
