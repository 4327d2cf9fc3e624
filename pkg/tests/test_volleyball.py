#!/usr/bin/env python3
"""
Tests for CSV ingestion and fits of the bundled volleyball data
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.datasets import (  # noqa: E402
    VOLLEYBALL_COMPONENTS,
    build_regression_dataset,
    load_volleyball,
    numeric_columns,
    read_table,
)
from src.errors import ParseError  # noqa: E402
from src.fitting import FitRunner, parse_substitution  # noqa: E402
from src.model import PriorSpec  # noqa: E402
from src.reports import fitted_frame  # noqa: E402
from src.sampler import ChainConfig  # noqa: E402

# Published posterior (mean, sd) of the 128-match fit, beta_lj and sigma2_j
UNCORRELATED_REFERENCE = {
    "beta_0_1": (0.5570, 0.1918), "beta_0_2": (-1.9765, 0.3457), "beta_0_3": (-0.9372, 0.4806),
    "beta_1_1": (0.1729, 0.0439), "beta_1_2": (0.1434, 0.0787), "beta_1_3": (0.1896, 0.1103),
    "beta_2_1": (-0.0719, 0.0418), "beta_2_2": (-0.1533, 0.0748), "beta_2_3": (-0.0269, 0.1034),
    "beta_3_1": (0.4273, 0.1740), "beta_3_2": (0.5267, 0.3124), "beta_3_3": (-0.2667, 0.4356),
    "beta_4_1": (-0.5559, 0.2818), "beta_4_2": (1.2419, 0.5086), "beta_4_3": (-1.9218, 0.7063),
    "sigma2_1": (0.0515, 0.0067), "sigma2_2": (0.1634, 0.0213), "sigma2_3": (0.3172, 0.0411),
}
CORRELATED_REFERENCE = {
    "beta_0_1": (0.5402, 0.1340), "beta_0_2": (-1.9646, 0.2373), "beta_0_3": (-0.9369, 0.3362),
    "beta_1_1": (0.1739, 0.0302), "beta_1_2": (0.1422, 0.0539), "beta_1_3": (0.1904, 0.0763),
    "beta_2_1": (-0.0710, 0.0288), "beta_2_2": (-0.1540, 0.0518), "beta_2_3": (-0.0266, 0.0721),
    "beta_3_1": (0.4317, 0.1235), "beta_3_2": (0.5156, 0.2156), "beta_3_3": (-0.2705, 0.3049),
    "beta_4_1": (-0.5284, 0.1945), "beta_4_2": (1.2339, 0.3470), "beta_4_3": (-1.9212, 0.4873),
}


def test_bundled_data_shape():
    data, compositions = load_volleyball()
    assert (data.n, data.g, data.p) == (128, 3, 4)
    assert compositions.labels[:2] == ("1", "2")
    assert data.covariate_names == ("z1", "z2", "z3", "z4")
    np.testing.assert_allclose(data.y[0], [0.25139, -1.13488, -2.63772], atol=1e-5)
    np.testing.assert_allclose(compositions.as_array().sum(axis=1), 1.0)


def test_numeric_columns_name_the_problem():
    frame = pd.DataFrame({"a": [1.0, 2.0], "b": ["3", "x"]})
    with pytest.raises(ParseError) as info:
        numeric_columns(frame, ["a", "b"])
    assert (info.value.row, info.value.column) == (1, "b")
    with pytest.raises(ParseError) as info:
        numeric_columns(frame, ["a", "c"])
    assert info.value.column == "c"
    np.testing.assert_array_equal(numeric_columns(frame, ["a"]), [[1.0], [2.0]])


def test_read_table_errors(tmp_path):
    with pytest.raises(ParseError):
        read_table(tmp_path / "nowhere.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        read_table(empty)


def test_dataset_without_covariates(tmp_path):
    path = tmp_path / "parts.csv"
    path.write_text("a,b,c\n0.2,0.3,0.5\n0.1,0.6,0.3\n0.3,0.3,0.4\n")
    data, compositions = build_regression_dataset(read_table(path), ["a", "b", "c"], [])
    assert (data.n, data.g, data.p) == (3, 2, 0)
    assert compositions.labels is None


def test_fitted_frame_columns():
    data, compositions = load_volleyball()
    beta = np.zeros((5, 3))
    frame = fitted_frame(data, compositions, beta, VOLLEYBALL_COMPONENTS)
    assert list(frame.columns[:2]) == ["label", "observed_attack"]
    np.testing.assert_allclose(frame["fitted_attack"], 0.25)


def test_substitution_grammar():
    assert parse_substitution("b2.slopes=100").label == "b2.slopes=100"
    assert parse_substitution(" d = 10 ").value == 10.0
    assert parse_substitution("a=-1").value == -1.0


def published_check(result, reference, tolerance=0.5):
    for name, (mean, sd) in reference.items():
        assert abs(result.summary(name).mean - mean) < tolerance * sd, name


@pytest.mark.slow
def test_uncorrelated_fit_reproduces_published_means():
    data, _ = load_volleyball()
    # a small inverse-gamma scale reproduces the published variance scale
    priors = PriorSpec.from_blocks(3, 4, d=0.01)
    runner = FitRunner(ChainConfig(iterations=20000, burn_in=2000, thin=5, seed=2012, n_chains=3))
    result = runner.fit_model(data, priors, "uncorrelated")
    assert result.max_psrf < 1.05
    published_check(result, UNCORRELATED_REFERENCE)


@pytest.mark.slow
def test_correlated_fit_reproduces_published_coefficients():
    data, _ = load_volleyball()
    priors = PriorSpec.from_blocks(3, 4, d=0.01)
    # full-length settings: 100000 sweeps, 10000 burn-in, every 20th kept, three chains
    runner = FitRunner(ChainConfig(seed=2012, workers=3))
    result = runner.fit_model(data, priors, "correlated")
    assert result.max_psrf < 1.05
    assert all(row.psrf < 1.05 for row in result.summaries)
    published_check(result, CORRELATED_REFERENCE)
    assert result.summary("rho_1_2").mean > 0


@pytest.mark.slow
def test_slope_prior_change_barely_moves_the_fit():
    data, _ = load_volleyball()
    priors = PriorSpec.from_blocks(3, 4, d=0.01)
    runner = FitRunner(ChainConfig(iterations=10000, burn_in=2000, thin=5, seed=5, n_chains=1))
    rows = runner.sensitivity(data, priors, [parse_substitution("b2=100")], ["uncorrelated"])
    changed = [row for row in rows if row["substitution"] != "baseline"]
    assert max(abs(row["delta_over_sd"]) for row in changed) < 0.5
