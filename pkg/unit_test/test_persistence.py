"""Tests for CSV/JSON outputs, manifests and config files."""
import sys
import os
import json
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from lqgsim.config import get_settings
from lqgsim.schemas.schemas import ChiConfig, ChiRow, MomentEstimate, SampleRow
from lqgsim.services.errors import DomainError
from lqgsim.services.persistence import (
    build_manifest,
    export_moment_csv,
    load_config_file,
    read_csv,
    read_manifest,
    run_directory,
    write_csv,
    write_json,
    write_manifest,
)


class TestCsv:
    def test_header_and_line_endings(self, tmp_path):
        path = write_csv(tmp_path / "chi.csv", [ChiRow(delta=0.125, mean_logD=2.0794415416798357, se=0.0, n=3)])
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.decode().splitlines() == ["delta,mean_logD,se,n", "0.125,2.0794415416798357,0.0,3"]

    def test_missing_values_are_empty(self, tmp_path):
        rows = [SampleRow(replica=0, delta=0.5, distance=None), SampleRow(replica=1, delta=0.5, distance=3.0)]
        path = write_csv(tmp_path / "distances.csv", rows)
        assert path.read_text().splitlines()[1] == "0,0.5,"
        assert read_csv(path, SampleRow) == rows

    def test_moment_export(self, tmp_path):
        est = MomentEstimate(gamma=1.0, p=2.0, replicas=100, mean=1.5, se=0.1,
                             finite_regime_flag=True, regime_boundary=4.0)
        lines = export_moment_csv([est], tmp_path / "moments.csv").read_text().splitlines()
        assert lines == ["gamma,p,replicas,mean,se,finite_regime_flag", "1.0,2.0,100,1.5,0.1,true"]


class TestManifest:
    def test_round_trip_and_sorted_keys(self, tmp_path):
        config = ChiConfig(N=64, deltas=[0.25, 0.125, 0.0625, 0.03125], replicas=2)
        manifest = build_manifest("chi", config, {"master": 0}, 1.5, ["chi.csv", "distances.csv"])
        path = write_manifest(tmp_path, manifest)
        text = path.read_text()
        assert text.endswith("\n")
        keys = list(json.loads(text))
        assert keys == sorted(keys)
        loaded = read_manifest(tmp_path)
        assert loaded.config["N"] == 64
        assert loaded.outputs == ["chi.csv", "distances.csv"]
        assert loaded.status == "ok"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DomainError, match="run_dir"):
            read_manifest(tmp_path)

    def test_json_payload(self, tmp_path):
        path = write_json(tmp_path / "x.json", {"b": 1, "a": [1, 2]})
        assert path.read_text() == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'


class TestRunDirectory:
    def test_explicit_dir(self, tmp_path):
        path = run_directory("chi", str(tmp_path / "a" / "b"), 3)
        assert path.is_dir()

    def test_default_dir_from_settings(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LQG_OUTPUT_DIR", str(tmp_path))
        get_settings.cache_clear()
        assert run_directory("chi", None, 7) == tmp_path / "chi-seed7"

    def test_unwritable_location(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(DomainError, match="output_dir"):
            run_directory("chi", str(blocker / "sub"), 0)


class TestConfigFiles:
    def test_key_value(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# sweep\ngamma=0.5\nN = 64\n\ndeltas=2^-3..2^-6\n")
        values = load_config_file(path)
        assert values == {"gamma": "0.5", "N": "64", "deltas": "2^-3..2^-6"}
        config = ChiConfig.model_validate(values)
        assert config.N == 64
        assert config.deltas == [0.125, 0.0625, 0.03125, 0.015625]

    def test_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"gamma": 0.5, "N": 64}')
        assert load_config_file(path) == {"gamma": 0.5, "N": 64}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("gamma=0.5\nnonsense\n")
        with pytest.raises(DomainError, match=":2:"):
            load_config_file(path)

    def test_bad_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"gamma": }')
        with pytest.raises(DomainError, match="config"):
            load_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DomainError):
            load_config_file(tmp_path / "absent.cfg")
