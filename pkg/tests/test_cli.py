#!/usr/bin/env python3
"""
End-to-end tests of the command-line entry point and its result files
"""

import json
import os
import sys

import pandas as pd
import pytest

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.main import EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DATA, EXIT_OK, main  # noqa: E402
from src.metrics import RunMetrics  # noqa: E402
from src.reports import read_summary_csv  # noqa: E402

SHORT = ["--iterations", "100", "--burn-in", "50", "--thin", "10", "--seed", "7"]


def write_rows(path, rows):
    path.write_text("match,attack,block,serve,errors,z1\n" + "".join(f"{row}\n" for row in rows))
    return str(path)


def test_transform_writes_alr_columns(tmp_path):
    out = tmp_path / "alr.csv"
    assert main(["transform", "--out", str(out)]) == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["match", "z1", "z2", "z3", "z4", "alr_1", "alr_2", "alr_3"]
    assert len(frame) == 128
    assert frame.loc[0, "alr_1"] == pytest.approx(0.25139, abs=1e-5)


def test_transform_rejects_zero_component(tmp_path):
    data = write_rows(tmp_path / "zero.csv", ["1,50,20,0,30,1", "2,40,20,10,30,0"])
    code = main(["transform", "--data", data, "--covariates", "z1", "--out", str(tmp_path / "o.csv")])
    assert code == EXIT_DATA


def test_transform_rejects_bad_row_sum(tmp_path):
    data = write_rows(tmp_path / "short.csv", ["1,50,20,10,30,1", "2,40,20,10,10,0"])
    assert main(["transform", "--data", data, "--out", str(tmp_path / "o.csv")]) == EXIT_DATA


def test_fit_with_missing_covariate(tmp_path):
    code = main(["fit", "--covariates", "z1", "z9", "--out-dir", str(tmp_path)] + SHORT)
    assert code == EXIT_DATA


def test_short_fit_writes_every_result_file(tmp_path):
    code = main(["fit", "--chains", "1", "--metrics", "--out-dir", str(tmp_path)] + SHORT)
    assert code == EXIT_OK
    for model in ("uncorrelated", "correlated"):
        draws = pd.read_csv(tmp_path / f"draws_{model}.csv")
        assert len(draws) == 5
        assert draws["iteration"].tolist() == [60, 70, 80, 90, 100]
        summary = pd.read_csv(tmp_path / f"summary_{model}.csv")
        assert len(summary) == (18 if model == "uncorrelated" else 21)
        criteria = json.loads((tmp_path / f"criteria_{model}.json").read_text())
        assert len(criteria["cpo"]) == 128
        fitted = pd.read_csv(tmp_path / f"fitted_{model}.csv")
        assert "fitted_attack" in fitted.columns and len(fitted) == 128
        metadata = json.loads((tmp_path / f"metadata_{model}.json").read_text())
        assert metadata["data"]["reference_component"] == "errors"
        assert metadata["chain"]["seeds"] == [7]
    comparison = pd.read_csv(tmp_path / "comparison.csv")
    assert comparison["model"].tolist() == ["uncorrelated", "correlated"]
    assert "alr_ess" in (tmp_path / "metrics.prom").read_text()


def test_fit_reruns_are_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    argv = ["fit", "--model", "correlated", "--chains", "2"] + SHORT
    assert main(argv + ["--out-dir", str(first), "--psrf-threshold", "10"]) == EXIT_OK
    assert main(argv + ["--out-dir", str(second), "--psrf-threshold", "10"]) == EXIT_OK
    for name in ("summary_correlated.csv", "draws_correlated.csv", "criteria_correlated.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    draws = pd.read_csv(first / "draws_correlated.csv")
    assert draws.groupby("chain").size().tolist() == [5, 5]


def test_summary_csv_round_trip(tmp_path):
    assert main(["fit", "--model", "uncorrelated", "--chains", "2", "--psrf-threshold", "10",
                 "--out-dir", str(tmp_path)] + SHORT) == EXIT_OK
    rows = read_summary_csv(tmp_path / "summary_uncorrelated.csv")
    frame = pd.read_csv(tmp_path / "summary_uncorrelated.csv")
    assert [row.name for row in rows] == frame["name"].tolist()
    assert rows[0].mean == pytest.approx(frame.loc[0, "mean"])
    assert all(row.lower <= row.upper for row in rows)


def test_failed_convergence_exit_status(tmp_path):
    code = main(["fit", "--model", "uncorrelated", "--chains", "2", "--psrf-threshold", "0.5",
                 "--out-dir", str(tmp_path)] + SHORT)
    assert code == EXIT_CONVERGENCE
    assert (tmp_path / "summary_uncorrelated.csv").exists()


def test_bad_sweep_is_a_config_error(tmp_path):
    assert main(["sensitivity", "--sweep", "e=5", "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["sensitivity", "--sweep", "d.slopes=5", "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_sensitivity_sweep(tmp_path):
    code = main(["sensitivity", "--model", "uncorrelated", "--chains", "1", "--sweep", "b2=100",
                 "--out-dir", str(tmp_path)] + SHORT)
    assert code == EXIT_OK
    frame = pd.read_csv(tmp_path / "sensitivity.csv")
    assert frame["substitution"].tolist().count("baseline") == 18
    assert frame["substitution"].tolist().count("b2=100") == 18
    assert frame.loc[frame["substitution"] == "baseline", "delta"].isna().all()


def test_malformed_scenario_json(tmp_path):
    scenario = tmp_path / "broken.json"
    scenario.write_text("{not json")
    assert main(["simulate", "--scenario", str(scenario), "--out-dir", str(tmp_path)]) != EXIT_OK


def test_short_simulation(tmp_path):
    code = main(["simulate", "--model", "uncorrelated", "--replicates", "1", "--metrics",
                 "--prior-d", "0.01", "--out-dir", str(tmp_path)] + SHORT)
    assert code == EXIT_OK
    frame = pd.read_csv(tmp_path / "study.csv")
    assert len(frame) == 12
    assert set(frame["cp"]) <= {0.0, 1.0}
    study = json.loads((tmp_path / "study.json").read_text())
    assert study["studies"][0]["scenario"]["name"] == "volleyball"
    assert 'status="completed"' in (tmp_path / "metrics.prom").read_text()


def test_invalid_flags_exit_with_config_status():
    with pytest.raises(SystemExit) as info:
        main(["fit", "--model", "banana"])
    assert info.value.code == EXIT_CONFIG
    assert main(["fit", "--iterations", "10", "--burn-in", "20"]) == EXIT_CONFIG


def test_bad_environment_value(monkeypatch):
    monkeypatch.setenv("CHAIN_ITERATIONS", "lots")
    assert main(["transform", "--out", os.devnull]) == EXIT_CONFIG


def test_metrics_write_failure_is_logged(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert RunMetrics().write(blocker / "nested") is None


def test_quoted_yaml_number_is_accepted(tmp_path):
    path = tmp_path / "settings.yaml"
    path.write_text('chain:\n  thin: "5"\n')
    assert main(["transform", "--config", str(path), "--out", os.devnull]) == EXIT_OK
    path.write_text('chain:\n  thin: "lots"\n')
    assert main(["transform", "--config", str(path), "--out", os.devnull]) == EXIT_CONFIG
