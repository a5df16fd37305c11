"""
Tests for the command-line surface: exit statuses, config files, manifests and
the end-to-end pipeline.
"""
import json
from pathlib import Path

import pytest

from config import read_config_file
from errors import DataError
from forest import load_model
from main import run
from mapping import read_ascii_grid
from seed_data import PIPELINE_SPEC


def files_under(root: Path):
    """Relative path -> bytes of every non-manifest file"""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not p.name.endswith(".manifest.json")
    }


def run_pipeline(root: Path, threads: int = 1):
    raw = root / "raw"
    seed = ["--seed", "7", "--threads", str(threads)]
    assert run(["synth", "--suite", "pipeline", "--out", str(raw), "--overpasses", "6", "--stations", "6"] + seed) == 0
    swaths = [str(p) for p in sorted((raw / "swaths").glob("*.csv"))]
    assert run(["regrid", *swaths, "--spec", str(raw / "grid.spec"), "--out", str(root / "fields")] + seed) == 0
    assert run([
        "build-dataset", "--pollutant", "NO2", "--stations", str(raw / "stations.csv"),
        "--series", str(raw / "series.csv"), "--fields", str(root / "fields"), "--meteo", str(raw / "meteo"),
        "--landcover", str(raw / "landcover.csv"), "--out", str(root / "table.csv"),
    ] + seed) == 0
    assert run(["train", "--data", str(root / "table.csv"), "--pollutant", "NO2", "--n-estimators", "10",
                "--out", str(root / "model.txt")] + seed) == 0
    assert run(["evaluate", "--data", str(root / "table.csv"), "--method", "a", "--k", "3",
                "--n-estimators", "10", "--out", str(root / "method_a.csv")] + seed) == 0
    return raw


def predict(root: Path, raw: Path, threads: int, out: str) -> Path:
    assert run([
        "predict-grid", "--model", str(root / "model.txt"), "--fields", str(root / "fields"),
        "--meteo", str(raw / "meteo"), "--landcover", str(raw / "landcover.csv"),
        "--elevation", str(raw / "elevation.csv"), "--out", str(root / out), "--threads", str(threads),
    ]) == 0
    return root / out


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run1")
    raw = run_pipeline(root)
    return root, raw


class TestExitStatus:
    """Usage errors exit 1, data errors exit 2."""

    def test_no_subcommand(self, capsys):
        assert run([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_option(self):
        assert run(["train", "--data", "t.csv", "--out", "m.txt", "--trees", "5"]) == 1

    def test_missing_required_option(self):
        assert run(["train", "--data", "t.csv"]) == 1

    def test_bad_pollutant(self, tmp_path):
        assert run(["build-dataset", "--pollutant", "CO", "--stations", "s", "--series", "s", "--fields", "f",
                    "--meteo", "m", "--landcover", "l", "--out", str(tmp_path / "t.csv")]) == 1

    def test_missing_input_file(self, tmp_path, capsys):
        assert run(["train", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "m.txt")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_method_b_needs_test_data(self, tmp_path):
        assert run(["synth", "--suite", "smooth", "--rows", "100", "--stations", "10", "--seed", "1",
                    "--out", str(tmp_path)]) == 0
        assert run(["evaluate", "--data", str(tmp_path / "table.csv"), "--method", "b",
                    "--out", str(tmp_path / "b.csv")]) == 1

    def test_aggregate_needs_an_output(self, tmp_path):
        assert run(["aggregate", "--predictions", "p.csv", "--spec", "g.spec"]) == 1

    def test_version(self, capsys):
        assert run(["--version"]) == 0
        assert "airq" in capsys.readouterr().out


class TestConfigFile:
    """`--config` files supply flag defaults."""

    @pytest.fixture
    def table(self, tmp_path):
        assert run(["synth", "--suite", "smooth", "--rows", "200", "--stations", "10", "--seed", "2",
                    "--out", str(tmp_path)]) == 0
        return tmp_path / "table.csv"

    def test_values_fill_flags(self, tmp_path, table):
        config = tmp_path / "run.conf"
        config.write_text(f"# training run\nn_estimators = 3\ndata = {table}\nout = {tmp_path / 'm.txt'}\n")
        assert run(["train", "--config", str(config), "--seed", "1"]) == 0
        assert load_model(tmp_path / "m.txt").config.n_estimators == 3

    def test_command_line_wins(self, tmp_path, table):
        config = tmp_path / "run.conf"
        config.write_text("n-estimators = 3\nmax_features = log2\n")
        assert run(["train", "--config", str(config), "--data", str(table), "--n-estimators", "2",
                    "--seed", "1", "--out", str(tmp_path / "m.txt")]) == 0
        model = load_model(tmp_path / "m.txt")
        assert model.config.n_estimators == 2
        assert model.config.max_features_mode.value == "log2"

    def test_unknown_key(self, tmp_path, table):
        config = tmp_path / "run.conf"
        config.write_text("trees = 3\n")
        assert run(["train", "--config", str(config), "--data", str(table), "--out", str(tmp_path / "m.txt")]) == 1

    def test_reader(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("a = 1  # comment\n\nmin-samples-leaf=4\n")
        assert read_config_file(str(path)) == {"a": "1", "min_samples_leaf": "4"}
        path.write_text("just words\n")
        with pytest.raises(DataError):
            read_config_file(str(path))


class TestManifest:
    """Every run that writes files leaves a manifest."""

    def test_manifest_records_the_run(self, tmp_path, capsys):
        assert run(["synth", "--suite", "smooth", "--rows", "100", "--stations", "10", "--out", str(tmp_path)]) == 0
        manifest = json.loads((tmp_path / "table.csv.manifest.json").read_text())
        assert manifest["subcommand"] == "synth"
        assert isinstance(manifest["seed"], int)
        assert manifest["config"]["suite"] == "smooth"
        assert manifest["outputs"][0].endswith("table.csv")
        assert "wrote 100 smooth rows" in capsys.readouterr().out


@pytest.fixture
def station_table(tmp_path, monkeypatch):
    """A small station-effects suite in the working directory"""
    monkeypatch.chdir(tmp_path)
    assert run(["synth", "--suite", "station-effects", "--rows", "60", "--stations", "12",
                "--out", ".", "--seed", "3"]) == 0
    return tmp_path


class TestDefaultOutputs:
    """tune and evaluate write to the working directory when --out is omitted."""

    def test_tune_writes_sweep_csv(self, station_table):
        assert run(["tune", "--data", "table.csv", "--seed", "7", "--estimators", "5", "10",
                    "--modes", "sqrt"]) == 0
        lines = (station_table / "sweep.csv").read_text().splitlines()
        assert lines[0] == "n_estimators,max_features,mean_mse,seconds"
        assert len(lines) == 3
        assert (station_table / "sweep.csv.manifest.json").exists()

    def test_evaluate_names_the_report_after_the_method(self, station_table):
        assert run(["evaluate", "--method", "c", "--k", "10", "--seed", "7", "--data", "table.csv",
                    "--stations", "stations.csv", "--n-estimators", "5"]) == 0
        lines = (station_table / "method_c.csv").read_text().splitlines()
        assert lines[0] == "fold,r2,rmse,bias"
        assert len(lines) == 12
        assert not (station_table / "method_a.csv").exists()


@pytest.mark.slow
class TestDocumentedCommandLines:
    """The documented tune and evaluate invocations run as written."""

    def test_tune(self, station_table):
        assert run(["tune", "--data", "table.csv", "--seed", "7"]) == 0
        assert len((station_table / "sweep.csv").read_text().splitlines()) == 31

    def test_evaluate_method_c(self, station_table):
        assert run(["evaluate", "--method", "c", "--k", "10", "--seed", "7", "--data", "table.csv",
                    "--stations", "stations.csv"]) == 0
        assert (station_table / "method_c.csv").read_text().splitlines()[-1].startswith("mean,")


class TestPipeline:
    """synth -> regrid -> build-dataset -> train -> evaluate -> predict-grid -> aggregate."""

    def test_outputs_exist(self, pipeline_run):
        root, _ = pipeline_run
        assert (root / "fields" / "swath_000.field.csv").exists()
        assert (root / "fields" / "swath_000.field.spec").exists()
        report = (root / "method_a.csv").read_text().splitlines()
        assert report[0] == "fold,r2,rmse,bias"
        assert report[-1].startswith("mean,")
        assert len(report) == 5

    def test_same_seed_same_bytes(self, pipeline_run, tmp_path):
        root, _ = pipeline_run
        run_pipeline(tmp_path)
        fresh = files_under(tmp_path)
        first = files_under(root)
        assert "model.txt" in fresh
        assert fresh == {name: first[name] for name in fresh if name in first}
        assert set(fresh) <= set(first)

    def test_threads_do_not_change_predictions(self, pipeline_run):
        root, raw = pipeline_run
        one = predict(root, raw, 1, "pred_1.csv")
        four = predict(root, raw, 4, "pred_4.csv")
        assert one.read_bytes() == four.read_bytes()

    def test_aggregate(self, pipeline_run):
        root, raw = pipeline_run
        predictions = predict(root, raw, 1, "pred.csv")
        assert run(["aggregate", "--predictions", str(predictions), "--spec", str(raw / "grid.spec"),
                    "--annual", str(root / "annual.asc"), "--monthly", str(root / "monthly.csv")]) == 0
        raster = read_ascii_grid(root / "annual.asc")
        assert raster.values.shape == (PIPELINE_SPEC.n_rows, PIPELINE_SPEC.n_cols)
        assert (root / "monthly.csv").read_text().startswith("month,")
