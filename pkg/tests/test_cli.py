"""Command-line client driving the in-process service."""

import json

import pytest
from click.testing import CliRunner

from braggcdi import model
from braggcdi.cli import main
from braggcdi.config import ExperimentConfig, Variant, save_config
from braggcdi.shrinkwrap import ShrinkwrapParams


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def config_path(tmp_path):
    config = ExperimentConfig(
        crystal=model.CrystalSpec(
            n_cells=(8, 8, 8), inclusions=model.default_inclusions(8)
        ),
        noise={"enabled": True, "max_photons": 1e8, "rng_seed": 3},
        shrinkwrap=ShrinkwrapParams(
            max_iterations=10, support_update_every=5, er_final_iters=2
        ),
        variants=[
            Variant(method="dcdi"),
            Variant(method="shrinkwrap-from-dcdi"),
            Variant(method="dcdi", noise=True),
        ],
    )
    path = tmp_path / "config.yaml"
    save_config(config, path)
    return str(path)


def _json_output(result):
    # verdict lines may precede the JSON blob; find its start
    text = result.output
    return json.loads(text[text.index("{"):])


class TestSimulate:
    def test_writes_files(self, runner, config_path, tmp_path):
        out = tmp_path / "sim"
        result = runner.invoke(
            main, ["simulate", "--config", config_path, "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        body = _json_output(result)
        assert body["noisy"]
        assert (out / "truth.hdr").exists()

    def test_no_noise_flag(self, runner, config_path, tmp_path):
        out = tmp_path / "sim"
        result = runner.invoke(
            main,
            ["simulate", "--config", config_path, "--out", str(out), "--no-noise"],
        )
        assert result.exit_code == 0, result.output
        assert not _json_output(result)["noisy"]
        assert (out / "intensity_nonoise.raw").exists()

    def test_missing_config_file(self, runner):
        result = runner.invoke(main, ["simulate", "--config", "/no/such/file.yaml"])
        assert result.exit_code != 0

    def test_invalid_config_content(self, runner, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("crystal: {n_cells: [4, 4, 5]}\n")
        result = runner.invoke(main, ["simulate", "--config", str(bad)])
        assert result.exit_code != 0
        assert "n_cells" in result.output


class TestRun:
    def test_full_run(self, runner, config_path, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main, ["run", "--config", config_path, "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        body = _json_output(result)
        assert not body["failed"]
        assert len(body["rows"]) == 3
        lines = (out / "summary.csv").read_text().splitlines()
        assert len(lines) == 4

    def test_no_noise_drops_noisy_variants(self, runner, config_path, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main, ["run", "--config", config_path, "--out", str(out), "--no-noise"]
        )
        assert result.exit_code == 0, result.output
        body = _json_output(result)
        assert all(row["noise"] == "none" for row in body["rows"])

    def test_max_iters_override(self, runner, config_path, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main,
            ["run", "--config", config_path, "--out", str(out), "--max-iters", "4",
             "--no-noise"],
        )
        assert result.exit_code == 0, result.output
        trace = out / "trace_shrinkwrap-from-dcdi_nonoise.csv"
        assert len(trace.read_text().splitlines()) == 5  # header + 4 iterations

    def test_dump_volumes(self, runner, config_path, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(
            main,
            ["run", "--config", config_path, "--out", str(out), "--no-noise",
             "--dump-volumes"],
        )
        assert result.exit_code == 0, result.output
        assert (out / "volume_dcdi_nonoise.raw").exists()
        assert (out / "truth.raw").exists()

    def test_failure_exits_nonzero(self, runner, config_path, tmp_path, monkeypatch):
        from braggcdi import pipeline

        def explode(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(pipeline._shrinkwrap, "run_shrinkwrap", explode)
        result = runner.invoke(
            main, ["run", "--config", config_path, "--out", str(tmp_path / "x")]
        )
        assert result.exit_code == 1
        assert "synthetic failure" in result.output


class TestRefine:
    @pytest.mark.parametrize("seed_kind", ["dcdi", "autocorr"])
    def test_seed_kinds(self, runner, config_path, tmp_path, seed_kind):
        out = tmp_path / seed_kind
        result = runner.invoke(
            main,
            ["refine", "--config", config_path, "--out", str(out),
             "--seed-kind", seed_kind],
        )
        assert result.exit_code == 0, result.output
        body = _json_output(result)
        assert body["row"]["seed"] == seed_kind
        assert body["iterations"] == 10


class TestCompare:
    def test_verdict_lines(self, runner, config_path, tmp_path):
        result = runner.invoke(
            main,
            ["compare", "--config", config_path, "--out", str(tmp_path / "cmp"),
             "--no-noise"],
        )
        assert result.exit_code == 0, result.output
        first_line = result.output.splitlines()[0]
        assert first_line.startswith("noise-free:")
        body = _json_output(result)
        assert len(body["cases"]) == 1


class TestReconstruct:
    def test_per_noise_case(self, runner, config_path, tmp_path):
        result = runner.invoke(
            main,
            ["reconstruct", "--config", config_path, "--out", str(tmp_path / "rec")],
        )
        assert result.exit_code == 0, result.output
        body = _json_output(result)
        assert [r["method"] for r in body["rows"]] == ["dcdi", "dcdi"]
        assert {r["noise"] for r in body["rows"]} == {"none", "poisson"}
