"""End-to-end tests for the lqgsim command line."""
import sys
import os
import csv
import json
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.config import get_settings
from lqgsim.main import EXIT_FAILED, EXIT_INVALID, EXIT_OK, build_parser, resolve_threads, run

FLAT_CHI = ["chi", "--gamma", "0", "-N", "64", "--deltas", "2^-1..2^-4", "--replicas", "1"]
FLAT_HEAT = [
    "--gamma", "0", "-N", "64", "--heat-u", "0.4,0.5", "--heat-v", "0.6,0.5", "--r", "0.05",
    "--t-grid", "0.005,0.01,0.02,0.04", "--dt", "1e-4", "--heat-replicas", "4000", "--on-diagonal-correction",
]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text())


class TestParser:
    def test_every_command_registered(self):
        parser = build_parser()
        for command in ("field-sample", "partition", "distance", "chi", "lbm-heat", "consistency", "report"):
            args = parser.parse_args([command] if command != "report" else [command, "somewhere"])
            assert args.handler.NAME == command

    def test_unset_flags_stay_out_of_namespace(self):
        args = build_parser().parse_args(["chi", "--gamma", "0.5"])
        assert vars(args)["gamma"] == "0.5"
        assert "replicas" not in vars(args)


class TestThreads:
    def test_environment_overrides_config(self, monkeypatch):
        monkeypatch.setenv("LQG_THREADS", "3")
        get_settings.cache_clear()
        assert resolve_threads(1) == 3

    def test_config_then_default(self):
        assert resolve_threads(2) == 2
        assert resolve_threads(None) == 1


class TestChiCommand:
    def test_run_writes_outputs(self, tmp_path):
        out = tmp_path / "chi"
        assert run(FLAT_CHI + ["--output-dir", str(out)]) == EXIT_OK
        manifest = read_manifest(out)
        assert manifest["command"] == "chi"
        assert manifest["status"] == "ok"
        assert manifest["outputs"] == ["chi.csv", "chi_summary.json", "distances.csv"]
        assert manifest["config"]["N"] == 64
        rows = read_rows(out / "chi.csv")
        assert [float(r["delta"]) for r in rows] == [0.5, 0.25, 0.125, 0.0625]
        assert len(read_rows(out / "distances.csv")) == 4

    def test_rerun_from_manifest_is_identical(self, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        assert run(FLAT_CHI + ["--output-dir", str(first)]) == EXIT_OK
        assert run(["chi", "--config", str(first / "manifest.json"), "--output-dir", str(second)]) == EXIT_OK
        for name in ("distances.csv", "chi.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_key_value_config(self, tmp_path):
        cfg = tmp_path / "sweep.cfg"
        cfg.write_text("gamma=0\nN=64\ndeltas=2^-1..2^-4\nreplicas=1\n")
        out = tmp_path / "out"
        assert run(["chi", "--config", str(cfg), "--output-dir", str(out)]) == EXIT_OK
        assert read_manifest(out)["config"]["gamma"] == 0.0

    def test_checks_add_outputs(self, tmp_path):
        out = tmp_path / "checks"
        assert run(FLAT_CHI + ["--checks", "concentration,variants", "--output-dir", str(out)]) == EXIT_OK
        assert {"concentration.csv", "variants.csv"} <= set(read_manifest(out)["outputs"])

    def test_prime_equivalence_check(self, tmp_path):
        out = tmp_path / "prime"
        assert run(FLAT_CHI + ["--checks", "prime_equivalence", "--output-dir", str(out)]) == EXIT_OK
        assert len(read_rows(out / "prime_equivalence.csv")) == 4
        summary = json.loads((out / "prime_equivalence.json").read_text())
        assert summary["n"] == 4
        assert {"fraction", "passed", "required"} <= set(summary)

    def test_invalid_grid_size(self, tmp_path, capsys):
        assert run(["chi", "-N", "100", "--output-dir", str(tmp_path)]) == EXIT_INVALID
        assert "N:" in capsys.readouterr().err

    def test_disconnected_sweep_fails(self, tmp_path):
        out = tmp_path / "fail"
        args = ["chi", "--gamma", "0", "-N", "32", "--deltas", "2^-6..2^-9", "--replicas", "1", "--output-dir", str(out)]
        assert run(args) == EXIT_FAILED
        assert read_manifest(out)["status"].startswith("failed")

    def test_manifest_of_other_command(self, tmp_path, capsys):
        first = tmp_path / "first"
        assert run(FLAT_CHI + ["--output-dir", str(first)]) == EXIT_OK
        code = run(["lbm-heat", "--config", str(first / "manifest.json"), "--output-dir", str(tmp_path / "x")])
        assert code == EXIT_INVALID
        assert "config" in capsys.readouterr().err


class TestOtherCommands:
    def test_field_sample(self, tmp_path):
        out = tmp_path / "field"
        assert run(["field-sample", "-N", "32", "--slices", "2", "--output-dir", str(out)]) == EXIT_OK
        manifest = read_manifest(out)
        assert set(manifest["seeds"]) == {"master", "field"}
        assert (out / "field.lqgf").read_bytes()[:5] == b"LQGF1"
        assert len(read_rows(out / "octaves.csv")) == 3
        summary = json.loads((out / "field_summary.json").read_text())
        assert summary["total_mass"] > 0

    def test_field_sample_continuity_table(self, tmp_path):
        out = tmp_path / "cont"
        args = ["field-sample", "-N", "32", "--slices", "2", "--continuity-replicas", "2", "--no-dump", "--output-dir", str(out)]
        assert run(args) == EXIT_OK
        rows = read_rows(out / "continuity.csv")
        assert len(rows) == 3 * 3
        assert "continuity.csv" in read_manifest(out)["outputs"]

    def test_partition(self, tmp_path):
        out = tmp_path / "part"
        args = ["partition", "--gamma", "0", "-N", "128", "--delta", "0.25", "-u", "0.25,0.5", "-v", "0.75,0.5",
                "--output-dir", str(out)]
        assert run(args) == EXIT_OK
        stats = json.loads((out / "partition_stats.json").read_text())
        assert stats["leaf_count"] == 64
        assert stats["d_prime_edges"] == 4

    def test_distance_compare_variants(self, tmp_path):
        out = tmp_path / "dist"
        args = ["distance", "--gamma", "0", "-N", "64", "--delta", "0.125", "--compare-variants", "--output-dir", str(out)]
        assert run(args) == EXIT_OK
        rows = read_rows(out / "distance.csv")
        assert [r["variant"] for r in rows] == ["standard", "doubled", "circle_avg"]
        assert rows[0]["distance"] == "4"
        assert all(float(r["wall_ms"]) >= 0.0 for r in rows)
        witness = json.loads((out / "witness.json").read_text())
        assert len(witness["standard"]["centers"]) == 4

    def test_lbm_heat_and_report(self, tmp_path):
        out = tmp_path / "heat"
        assert run(["lbm-heat"] + FLAT_HEAT + ["--output-dir", str(out)]) == EXIT_OK
        summary = json.loads((out / "heat_summary.json").read_text())
        assert summary["fit"]["points"] == 4
        assert len(read_rows(out / "heat.csv")) == 4

        assert run(["report", str(out)]) == EXIT_OK
        header = (out / "figure_heat.csv").read_text().splitlines()[0]
        assert header == "t,log_inv_t,log_level,se"
        assert (out / "report_manifest.json").is_file()
        assert read_manifest(out)["command"] == "lbm-heat"

    def test_report_for_chi(self, tmp_path):
        src, dst = tmp_path / "chi", tmp_path / "figures"
        assert run(FLAT_CHI + ["--output-dir", str(src)]) == EXIT_OK
        assert run(["report", str(src), "--output-dir", str(dst)]) == EXIT_OK
        assert (dst / "figure_distance.csv").read_text().splitlines()[0] == "delta,mean_logD,se,n"

    def test_report_without_manifest(self, tmp_path, capsys):
        assert run(["report", str(tmp_path)]) == EXIT_INVALID
        assert "run_dir" in capsys.readouterr().err

    def test_consistency(self, tmp_path):
        out = tmp_path / "cons"
        args = ["consistency", "--deltas", "2^-1..2^-4", "--replicas", "1"] + FLAT_HEAT + ["--output-dir", str(out)]
        assert run(args) == EXIT_OK
        result = json.loads((out / "consistency.json").read_text())
        assert result["target"] == pytest.approx(result["chi"] / (2 - result["chi"]))
        assert {"chi.csv", "heat.csv", "consistency.json"} <= set(read_manifest(out)["outputs"])
