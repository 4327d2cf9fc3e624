#!/usr/bin/env python3
"""
Tests for settings precedence: defaults < environment < YAML < flags
"""

import os
import sys

import numpy as np
import pytest

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.config import Config  # noqa: E402
from src.errors import ConfigError  # noqa: E402
from src.main import build_parser, load_settings  # noqa: E402


def settings_for(argv):
    return load_settings(build_parser().parse_args(argv))


def test_defaults():
    settings = Config()
    assert (settings.iterations, settings.burn_in, settings.thin) == (100000, 10000, 20)
    assert settings.prior_b2 == 1000.0 and settings.prior_c == 0.1 and settings.prior_d == 100.0
    assert settings.level == 0.90
    chain = settings.to_chain_config()
    assert chain.n_kept == 4500 and chain.seed == 2012


def test_environment_overrides_defaults(monkeypatch):
    monkeypatch.setenv("CHAIN_ITERATIONS", "500")
    monkeypatch.setenv("PRIOR_D", "0.01")
    monkeypatch.setenv("METRICS_ENABLED", "true")
    settings = Config()
    assert settings.iterations == 500
    assert settings.prior_d == 0.01
    assert settings.metrics_enabled is True


def test_yaml_overrides_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("CHAIN_THIN", "7")
    path = tmp_path / "settings.yaml"
    path.write_text("chain:\n  thin: 9\n  seed: 11\npriors:\n  prior_b2_slope: 10.0\n")
    settings = Config().load_yaml(str(path))
    assert settings.thin == 9 and settings.seed == 11
    priors = settings.to_prior_spec(g=3, p=4)
    assert np.all(priors.b2[1:] == 10.0) and np.all(priors.b2[0] == 1000.0)


def test_flags_override_yaml(monkeypatch, tmp_path):
    monkeypatch.setenv("CHAIN_THIN", "7")
    path = tmp_path / "settings.yaml"
    path.write_text("chain:\n  thin: 9\n  iterations: 1000\n")
    settings = settings_for(["fit", "--config", str(path), "--thin", "11", "--burn-in", "100"])
    assert settings.thin == 11
    assert settings.iterations == 1000
    assert settings.burn_in == 100


def test_simulate_flags_set_replicate_chains():
    settings = settings_for(["simulate", "--iterations", "300", "--burn-in", "100", "--chains", "2"])
    assert settings.study_iterations == 300
    assert settings.study_chains == 2
    assert settings.iterations == 100000
    chain = settings.to_study_chain_config()
    assert (chain.iterations, chain.burn_in, chain.n_chains) == (300, 100, 2)


def test_yaml_rejects_unknown_keys(tmp_path):
    unknown_key = tmp_path / "key.yaml"
    unknown_key.write_text("chain:\n  iters: 5\n")
    with pytest.raises(ConfigError, match="chain.iters"):
        Config().load_yaml(str(unknown_key))

    unknown_section = tmp_path / "section.yaml"
    unknown_section.write_text("sampler:\n  kind: nuts\n")
    with pytest.raises(ConfigError, match="sampler"):
        Config().load_yaml(str(unknown_section))

    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("42\n")
    with pytest.raises(ConfigError):
        Config().load_yaml(str(scalar))

    with pytest.raises(ConfigError):
        Config().load_yaml(str(tmp_path / "missing.yaml"))


def test_update_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        Config().update(namespace="default")
    settings = Config().update(thin=None, seed=3)
    assert settings.thin == 20 and settings.seed == 3


@pytest.mark.parametrize("overrides", [
    {"burn_in": 100000},
    {"thin": 0},
    {"n_chains": 0},
    {"level": 1.5},
    {"prior_d": 0.0},
    {"prior_b2_intercept": -1.0},
    {"log_format": "xml"},
    {"study_burn_in": 6000},
])
def test_validate_rejects_bad_values(overrides):
    with pytest.raises(ConfigError):
        Config().update(**overrides).validate()


def test_yaml_values_are_coerced_to_field_types(tmp_path):
    path = tmp_path / "quoted.yaml"
    path.write_text('chain:\n  thin: "5"\n  adapt: "false"\npriors:\n  prior_d: "0.01"\n'
                    "  prior_b2_slope: 10\nreport:\n  out_dir: 42\n")
    settings = Config().load_yaml(str(path)).validate()
    assert settings.thin == 5 and isinstance(settings.thin, int)
    assert settings.adapt is False
    assert settings.prior_d == 0.01
    assert isinstance(settings.prior_b2_slope, float)
    assert settings.out_dir == "42"


@pytest.mark.parametrize("body", [
    'chain:\n  thin: "five"\n',
    "chain:\n  thin: 2.5\n",
    "chain:\n  thin:\n",
    "chain:\n  adapt: maybe\n",
    "priors:\n  prior_d: [1, 2]\n",
    "chain: 5\n",
])
def test_yaml_values_of_the_wrong_type_are_config_errors(tmp_path, body):
    path = tmp_path / "bad.yaml"
    path.write_text(body)
    with pytest.raises(ConfigError):
        Config().load_yaml(str(path))
