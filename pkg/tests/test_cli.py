"""CLI behavior and exit codes: 0 ok, 2 config invalid, 3 not found, 4 provider."""

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from plaza.cli import cli

BUNDLE_PATH = Path(__file__).parent / "data" / "reference_bundle.yaml"


@pytest.fixture
def runner():
    return CliRunner()


class TestSimulate:
    def test_ok_prints_summary(self, runner, tmp_path):
        result = runner.invoke(
            cli,
            ["simulate", "--config", str(BUNDLE_PATH), "--seed", "7",
             "--out", str(tmp_path / "out")],
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert summary["seed"] == 7
        assert summary["events_by_kind"]["session_started"] == 1
        assert (tmp_path / "out" / "summary.json").exists()

    def test_invalid_bundle_exit_2(self, runner, tmp_path):
        data = yaml.safe_load(BUNDLE_PATH.read_text())
        data["experiment"]["session_duration_s"] = 0
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump(data))
        result = runner.invoke(cli, ["simulate", "--config", str(bad)])
        assert result.exit_code == 2
        assert "invalid bundle" in result.output

    def test_unreachable_live_provider_exit_4(self, runner, tmp_path):
        data = yaml.safe_load(BUNDLE_PATH.read_text())
        data["model_configs"][0]["endpoint_url"] = "http://127.0.0.1:1/v1"
        bad = tmp_path / "live.yaml"
        bad.write_text(yaml.safe_dump(data))
        result = runner.invoke(
            cli, ["simulate", "--config", str(bad), "--provider", "live"]
        )
        assert result.exit_code == 4
        assert "provider failure" in result.output

    def test_duration_override(self, runner, tmp_path):
        result = runner.invoke(
            cli,
            ["simulate", "--config", str(BUNDLE_PATH), "--duration", "60",
             "--out", str(tmp_path / "out")],
        )
        assert result.exit_code == 0
        summary = json.loads(result.output)
        assert summary["virtual_end_ms"] <= 120_000


class TestExport:
    def test_not_found_exit_3(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["export", "i_missing", "--data-dir", str(tmp_path / "data"),
                  "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 3
        assert "not found" in result.output

    def test_export_from_data_dir(self, runner, tmp_path):
        from plaza.bundle import read_bundle
        from plaza.simulate import run_simulation
        from plaza.store import Store

        data_dir = tmp_path / "data"
        store = Store(str(data_dir))
        result = run_simulation(read_bundle(str(BUNDLE_PATH)), seed=1, store=store)
        store.close()
        iid = result.instance_ids[0]
        out = tmp_path / "exported"
        cli_result = runner.invoke(
            cli, ["export", iid, "--data-dir", str(data_dir), "--out", str(out)]
        )
        assert cli_result.exit_code == 0, cli_result.output
        assert (out / f"instance_{iid}" / "export.json").exists()


class TestSeedAvatars:
    def test_ingest_counts_and_missing(self, runner, tmp_path):
        avatar_dir = tmp_path / "avatars"
        avatar_dir.mkdir()
        for name in ("a.png", "b.png", "c.png"):
            (avatar_dir / name).write_bytes(b"png")
        (avatar_dir / "avatars.json").write_text(
            json.dumps({"a.png": "female", "b.png": "neutral"})
        )
        result = runner.invoke(
            cli,
            ["seed-avatars", str(avatar_dir), "--data-dir", str(tmp_path / "data")],
        )
        assert result.exit_code == 0
        assert "ingested 2 avatars" in result.output
        assert "c.png" in result.output  # listed as missing metadata

        from plaza.store import Store

        store = Store(str(tmp_path / "data"))
        assert len(store.avatars) == 2
