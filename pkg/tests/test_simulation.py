#!/usr/bin/env python3
"""
Tests for scenario handling, synthetic data and the coverage study
"""

import json
import os
import sys
from dataclasses import replace

import numpy as np
import pytest

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.errors import ScenarioError  # noqa: E402
from src.model import PriorSpec  # noqa: E402
from src.sampler import ChainConfig  # noqa: E402
from src.simulation import (  # noqa: E402
    STUDY_SAMPLE_SIZES,
    CovariateGenerator,
    ModelReplicate,
    SimScenario,
    aggregate,
    count_preferred,
    coverage,
    generate_dataset,
    run_replicate,
    run_sample_sizes,
    run_study,
)

QUICK = ChainConfig(iterations=400, burn_in=100, thin=5, seed=2012, n_chains=1)
PRIORS = PriorSpec.from_blocks(3, 2, d=0.01)


def test_coverage_is_inclusive():
    assert coverage((0.4, 0.6), 0.5)
    assert not coverage((0.6, 0.7), 0.5)
    assert coverage((0.5, 0.5), 0.5)
    assert coverage((0.4, 0.5), 0.5)


def test_builtin_scenarios():
    plain = SimScenario.builtin("volleyball")
    assert plain.n == 100 and plain.replicates == 100
    assert plain.true_rho.tolist() == [0.0, 0.0, 0.0]
    assert plain.true_beta[0].tolist() == [0.5, -1.0, -2.0]
    assert SimScenario.builtin("volleyball-rho").true_rho.tolist() == [0.45, 0.37, 0.20]
    with pytest.raises(ScenarioError):
        SimScenario.builtin("nope")
    assert STUDY_SAMPLE_SIZES == (70, 100, 150)


def test_scenario_validation():
    scenario = SimScenario.volleyball()
    with pytest.raises(ScenarioError):
        replace(scenario, true_rho=np.array([0.9, 0.9, -0.9]))
    with pytest.raises(ScenarioError):
        replace(scenario, replicates=0)
    with pytest.raises(ScenarioError):
        replace(scenario, true_sigma2=np.array([0.1, 0.0, 0.1]))
    with pytest.raises(ScenarioError):
        replace(scenario, n=3)
    with pytest.raises(ScenarioError):
        CovariateGenerator("bernoulli", (1.5,))
    with pytest.raises(ScenarioError):
        CovariateGenerator.from_dict({"kind": "normal", "mean": 0.0})
    with pytest.raises(ScenarioError):
        CovariateGenerator.from_dict({"kind": "poisson"})


def test_truth_names_follow_parameter_order():
    truth = SimScenario.volleyball(correlated_truth=True).truth_by_name(correlated=True)
    assert len(truth) == 15
    assert truth["beta_0_2"] == -1.0
    assert truth["sigma2_3"] == 0.3
    assert truth["rho_1_3"] == 0.37
    assert len(SimScenario.volleyball().truth_by_name(correlated=False)) == 12


def test_zero_variance_gives_the_linear_predictor():
    scenario = replace(SimScenario.volleyball(n=20), true_sigma2=np.full(3, 1e-300))
    simulated = generate_dataset(scenario, np.random.default_rng(0))
    data = simulated.data
    np.testing.assert_allclose(data.y, data.design() @ scenario.true_beta, atol=1e-12)


def test_response_means_match_generating_process():
    scenario = SimScenario.volleyball(n=150)
    data = generate_dataset(scenario, np.random.default_rng(1)).data
    expected = scenario.true_beta[0] + 0.1 * 0.8 + 0.1 * 0.5
    # marginal variance adds the covariate spread to the error variance
    variance = scenario.true_sigma2 + 0.01 * 0.8 * 0.2 + 0.01 * 0.01
    standard_error = np.sqrt(variance / scenario.n)
    assert np.all(np.abs(data.y.mean(axis=0) - expected) < 3 * standard_error)


def test_same_seed_gives_same_dataset():
    scenario = SimScenario.volleyball(correlated_truth=True, n=30)
    first = generate_dataset(scenario, np.random.default_rng(5), with_compositions=True)
    second = generate_dataset(scenario, np.random.default_rng(5), with_compositions=True)
    np.testing.assert_array_equal(first.data.y, second.data.y)
    np.testing.assert_array_equal(first.data.z, second.data.z)
    assert first.compositions.n == 30 and first.compositions.n_parts == 4
    np.testing.assert_allclose(first.compositions.alr(), first.data.y, atol=1e-10)


def test_scenario_from_dict_and_json(tmp_path):
    overrides = {"base": "volleyball", "n": 40, "replicates": 2, "name": "small"}
    scenario = SimScenario.from_dict(overrides)
    assert (scenario.n, scenario.replicates, scenario.name) == (40, 2, "small")
    assert scenario.covariate_gens[0] == CovariateGenerator("bernoulli", (0.8,))

    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario.to_dict()))
    loaded = SimScenario.from_json(str(path))
    assert loaded.to_dict() == scenario.to_dict()


def test_scenario_json_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{"n": 10,\n "true_beta": [}')
    with pytest.raises(ScenarioError, match="line 2"):
        SimScenario.from_json(str(broken))
    with pytest.raises(ScenarioError):
        SimScenario.from_json(str(tmp_path / "missing.json"))
    with pytest.raises(ScenarioError, match="true_beta"):
        SimScenario.from_dict({"n": 10, "true_sigma2": [1.0], "covariates": []})
    with pytest.raises(ScenarioError):
        SimScenario.from_dict([1, 2, 3])


def test_intercept_only_scenario():
    scenario = SimScenario.from_dict({"n": 30, "true_beta": [[0.5, -1.0]], "true_sigma2": [0.2, 0.3],
                                      "covariates": [], "replicates": 1})
    simulated = generate_dataset(scenario, np.random.default_rng(0), with_compositions=True)
    assert simulated.data.z.shape == (30, 0)
    assert simulated.data.y.shape == (30, 2)
    assert simulated.compositions.n_parts == 3

    results = run_replicate(scenario, PriorSpec.from_blocks(2, 0, d=0.01), QUICK, replicate=0)
    assert all(result.ok for result in results.values())
    assert set(results["correlated"].covered) == {"beta_0_1", "beta_0_2", "sigma2_1", "sigma2_2", "rho_1_2"}


def test_replicate_fits_both_models():
    scenario = SimScenario.volleyball(n=40, replicates=1)
    results = run_replicate(scenario, PRIORS, QUICK, replicate=0)
    assert set(results) == {"uncorrelated", "correlated"}
    assert all(result.ok for result in results.values())
    assert len(results["uncorrelated"].covered) == 12
    assert len(results["correlated"].covered) == 15
    assert set(results["correlated"].criteria) == {"eaic", "ebic", "dic", "lpml"}


def test_single_replicate_coverage_is_zero_or_one():
    scenario = SimScenario.volleyball(n=40, replicates=1)
    result = run_study(scenario, PRIORS, QUICK)
    assert len(result.rows_for("uncorrelated")) == 12
    assert len(result.rows_for("correlated")) == 15
    assert all(row.cp in (0.0, 1.0) for row in result.rows)
    assert result.completed == {"uncorrelated": 1, "correlated": 1}
    assert result.row("correlated", "rho_1_2").truth == 0.0


def test_study_is_deterministic():
    scenario = SimScenario.volleyball(n=40, replicates=2)
    first = run_study(scenario, PRIORS, QUICK, models=("uncorrelated",))
    second = run_study(scenario, PRIORS, QUICK, models=("uncorrelated",))
    assert first.as_records() == second.as_records()
    assert first.criteria == second.criteria


def test_failed_replicates_are_counted():
    scenario = SimScenario.volleyball(n=40, replicates=2)
    good = run_replicate(scenario, PRIORS, QUICK, 0, models=("uncorrelated",))
    failed = {"uncorrelated": replace(good["uncorrelated"], error="NotPositiveDefiniteError: boom")}
    result = aggregate(scenario, [good, failed], ("uncorrelated",), seed=1)
    assert result.completed["uncorrelated"] == 1
    assert result.failed["uncorrelated"] == 1
    assert all(row.replicates == 1 for row in result.rows)

    nothing = aggregate(scenario, [failed], ("uncorrelated",), seed=1)
    assert np.isnan(nothing.row("uncorrelated", "beta_0_1").cp)


def test_preferred_model_counts():
    def fits(dic_u, dic_c, lpml_u=-10.0, lpml_c=-5.0, error=None):
        return {
            "uncorrelated": ModelReplicate("uncorrelated", criteria={"eaic": 1.0, "ebic": 1.0, "dic": dic_u,
                                                                     "lpml": lpml_u}),
            "correlated": ModelReplicate("correlated", criteria={"eaic": 2.0, "ebic": 2.0, "dic": dic_c,
                                                                 "lpml": lpml_c}, error=error),
        }

    replicates = [fits(10.0, 8.0), fits(7.0, 9.0), fits(10.0, 5.0), fits(1.0, 0.0, error="boom")]
    counts = count_preferred(replicates, ("uncorrelated", "correlated"))
    assert counts["dic"] == {"uncorrelated": 1, "correlated": 2}
    assert counts["lpml"] == {"uncorrelated": 0, "correlated": 3}
    assert counts["eaic"] == {"uncorrelated": 3, "correlated": 0}
    assert count_preferred(replicates, ("uncorrelated",))["dic"] == {"uncorrelated": 0}


def test_sample_size_sweep_stacks_results():
    scenario = SimScenario.volleyball(replicates=1)
    results = run_sample_sizes(scenario, PRIORS, QUICK, sizes=(70, 100), models=("uncorrelated",))
    assert [result.scenario.n for result in results] == [70, 100]
    assert {row.n for row in results[1].rows} == {100}
    assert results[0].to_dict()["notes"]["marginal_mean"].startswith("recorded")


@pytest.mark.slow
def test_coverage_near_nominal_at_desk_scale():
    scenario = SimScenario.volleyball(n=100, replicates=100)
    config = ChainConfig(iterations=6000, burn_in=1000, thin=5, seed=2012, n_chains=1)
    result = run_study(scenario, PRIORS, config, models=("uncorrelated",), workers=4)
    assert abs(result.row("uncorrelated", "beta_0_1").cp - 0.884) <= 0.07
    assert abs(result.row("uncorrelated", "sigma2_1").mean - 0.0610) <= 0.01


@pytest.mark.slow
def test_uncorrelated_dic_not_worse_without_correlation():
    scenario = SimScenario.volleyball(n=100, replicates=20)
    config = ChainConfig(iterations=4000, burn_in=1000, thin=5, seed=7, n_chains=1)
    result = run_study(scenario, PRIORS, config, workers=4)
    slack = 2 * 15
    assert result.criteria["uncorrelated"]["dic"] <= result.criteria["correlated"]["dic"] + slack


@pytest.mark.slow
def test_correlated_model_wins_on_dic_with_correlated_errors():
    scenario = SimScenario.builtin("volleyball-rho")
    config = ChainConfig(iterations=4000, burn_in=1000, thin=5, seed=11, n_chains=1)
    result = run_study(scenario, PRIORS, config, models=("uncorrelated", "correlated"), workers=4)
    assert result.completed == {"uncorrelated": 100, "correlated": 100}
    assert result.preferred["dic"]["correlated"] >= 90
    assert result.to_dict()["preferred"]["dic"]["correlated"] == result.preferred["dic"]["correlated"]


@pytest.mark.slow
def test_small_sample_correlations_are_recovered_on_average():
    scenario = SimScenario.builtin("volleyball-rho").with_sample_size(40)
    scenario = replace(scenario, replicates=20)
    config = ChainConfig(iterations=4000, burn_in=1000, thin=4, seed=3, n_chains=1)
    result = run_study(scenario, PRIORS, config, models=("correlated",), workers=4)
    for name, truth in (("rho_1_2", 0.45), ("rho_1_3", 0.37), ("rho_2_3", 0.20)):
        row = result.row("correlated", name)
        assert abs(row.mean - truth) < 0.15, name
        assert row.cp >= 0.7, name
