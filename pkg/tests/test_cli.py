import json
import shutil
from importlib import resources

import pytest

from modechoice.cli import main

from helpers import FIXTURES, TRIPS_10, WEATHER_2


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture()
def mnl_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("mnl")
    assert run("simulate-fixture", "--seed", 3, "--fixture", "mnl", "--n", 1500, "--out", out) == 0
    return out


class TestPrepare:
    def test_ten_row_fixture(self, tmp_path, capsys):
        assert run("prepare", "--trips", TRIPS_10, "--out", tmp_path) == 0
        rows = (tmp_path / "observations.csv").read_text().splitlines()
        assert len(rows) == 1 + 6
        summary = json.loads((tmp_path / "prepare_summary.json").read_text())
        assert summary["schema_version"] == "modechoice.prepare/1"
        assert (summary["n_input"], summary["n_retained"], summary["n_dropped_filter"]) == (10, 6, 4)
        assert "retained 6" in capsys.readouterr().out

    def test_empty_input(self, tmp_path, caplog):
        src = tmp_path / "empty.csv"
        src.write_text(TRIPS_10.read_text().splitlines()[0] + "\n")
        assert run("prepare", "--trips", src, "--out", tmp_path / "o") == 0
        assert len((tmp_path / "o" / "observations.csv").read_text().splitlines()) == 1
        assert "no trip rows" in caplog.text

    def test_missing_column(self, tmp_path, capsys):
        src = tmp_path / "t.csv"
        src.write_text(TRIPS_10.read_text().replace("trip_duration", "duration"))
        assert run("prepare", "--trips", src, "--out", tmp_path / "o") == 1
        assert "trip_duration" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_bad_mode_row_numbered(self, tmp_path, capsys):
        lines = TRIPS_10.read_text().splitlines()
        lines[4] = lines[4].replace(",12,", ",55,", 1)
        src = tmp_path / "t.csv"
        src.write_text("\n".join(lines) + "\n")
        assert run("prepare", "--trips", src, "--out", tmp_path / "o") == 1
        err = capsys.readouterr().err
        assert "row 4" in err and "55" in err
        assert not (tmp_path / "o").exists()

    def test_missing_file(self, tmp_path, capsys):
        assert run("prepare", "--trips", tmp_path / "nope.csv", "--out", tmp_path / "o") == 1

    def test_with_weather(self, tmp_path):
        assert run("prepare", "--trips", TRIPS_10, "--weather", WEATHER_2, "--max-gap-minutes", 1e9,
                   "--out", tmp_path) == 0
        header = (tmp_path / "observations.csv").read_text().splitlines()[0]
        assert "origin_temperature" in header


class TestFuse:
    def test_fuse(self, tmp_path):
        assert run("prepare", "--trips", TRIPS_10, "--out", tmp_path / "p") == 0
        assert run("fuse", "--observations", tmp_path / "p" / "observations.csv", "--weather", WEATHER_2,
                   "--out", tmp_path / "f") == 0
        matches = (tmp_path / "f" / "weather_matches.csv").read_text().splitlines()
        assert len(matches) == 1 + 12
        # only P01-1 falls on the weather fixture's day
        matched = [line for line in matches[1:] if line.endswith(",0")]
        assert [line.split(",")[0] for line in matched] == ["P01-1", "P01-1"]


class TestEstimate:
    def test_estimate_report_effects(self, mnl_dir, tmp_path):
        obs, spec = mnl_dir / "observations.csv", mnl_dir / "spec.json"
        assert run("estimate", "--observations", obs, "--spec", spec, "--out", tmp_path / "a") == 0
        doc = json.loads((tmp_path / "a" / "result.json").read_text())
        assert doc["schema_version"] == "modechoice.result/1" and doc["converged"]
        assert 0 < doc["pseudo_r2"] < 1
        assert (tmp_path / "a" / "report.txt").read_text().startswith("Variable")
        # identical inputs give byte-identical outputs
        assert run("estimate", "--observations", obs, "--spec", spec, "--out", tmp_path / "b") == 0
        for name in ("result.json", "report.txt", "report.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert run("effects", "--observations", obs, "--result", tmp_path / "a" / "result.json",
                   "--out", tmp_path / "e") == 0
        assert (tmp_path / "e" / "effects.csv").exists()

    def test_config_file(self, mnl_dir, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"observations": str(mnl_dir / "observations.csv"),
                                   "spec": str(mnl_dir / "spec.json"), "out": str(tmp_path / "o"),
                                   "options": {"hessian_method": "outer-product"}}))
        assert run("estimate", "--config", cfg) == 0
        doc = json.loads((tmp_path / "o" / "result.json").read_text())
        assert doc["options"]["hessian_method"] == "outer-product"

    def test_bad_config_key(self, mnl_dir, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"options": {"draws": 3}}))
        assert run("estimate", "--config", cfg, "--observations", mnl_dir / "observations.csv",
                   "--spec", mnl_dir / "spec.json", "--out", tmp_path / "o") == 1
        assert "draws" in capsys.readouterr().err

    def test_non_convergence_exit_code(self, mnl_dir, tmp_path):
        code = run("estimate", "--observations", mnl_dir / "observations.csv", "--spec", mnl_dir / "spec.json",
                   "--max-iterations", 2, "--out", tmp_path)
        assert code == 2
        assert json.loads((tmp_path / "result.json").read_text())["converged"] is False

    def test_malformed_spec(self, mnl_dir, tmp_path, capsys):
        bad = tmp_path / "spec.json"
        bad.write_text('{"terms": [\n  {"name": "a" "covariate": "x"}]}')
        assert run("estimate", "--observations", mnl_dir / "observations.csv", "--spec", bad,
                   "--out", tmp_path / "o") == 1
        assert "line 2, column" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_unknown_covariate(self, mnl_dir, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps([{"name": "w_PV", "covariate": "w", "alternative": "PersonalVehicle"}]))
        assert run("estimate", "--observations", mnl_dir / "observations.csv", "--spec", spec,
                   "--out", tmp_path / "o") == 1
        assert "'w'" in capsys.readouterr().err

    def test_usage_error_exit_one(self):
        with pytest.raises(SystemExit) as exc:
            run("estimate", "--no-such-flag")
        assert exc.value.code == 1

    def test_seed_required(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("simulate-fixture", "--out", tmp_path)
        assert exc.value.code == 1


class TestReport:
    def test_report_golden(self, tmp_path, capsys):
        assert run("report", "--result", FIXTURES / "golden_result.json", "--out", tmp_path) == 0
        assert capsys.readouterr().out == (FIXTURES / "golden_report.txt").read_text()
        assert (tmp_path / "report.csv").read_text() == (FIXTURES / "golden_report.csv").read_text()

    def test_schema_mismatch(self, tmp_path, capsys):
        doc = json.loads((FIXTURES / "golden_result.json").read_text())
        doc["schema_version"] = "modechoice.result/0"
        p = tmp_path / "r.json"
        p.write_text(json.dumps(doc))
        assert run("report", "--result", p) == 1
        assert "schema" in capsys.readouterr().err


@pytest.mark.slow
def test_bundled_pipeline(tmp_path):
    data = resources.files("modechoice") / "data"
    for name in ("synthetic_trips.csv", "synthetic_weather.csv", "pipeline_spec.json"):
        shutil.copy(data / name, tmp_path / name)
    assert run("prepare", "--trips", tmp_path / "synthetic_trips.csv", "--weather",
               tmp_path / "synthetic_weather.csv", "--out", tmp_path / "prep") == 0
    assert run("estimate", "--observations", tmp_path / "prep" / "observations.csv",
               "--spec", tmp_path / "pipeline_spec.json", "--out", tmp_path / "fit") == 0
    doc = json.loads((tmp_path / "fit" / "result.json").read_text())
    assert doc["converged"] and 0 < doc["pseudo_r2"] < 1


def test_simulate_pipeline_fixture(tmp_path):
    assert run("simulate-fixture", "--seed", 1, "--fixture", "pipeline", "--n", 30, "--out", tmp_path) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"trips.csv", "weather.csv", "spec.json", "truth.json"}
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["seed"] == 1 and "purpose_nonwork_Other:sd" in truth["params"]
