"""
Configuration management for ALR Bayes
"""

import os
from dataclasses import dataclass, fields
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from src.errors import ConfigError

# Load environment variables
dotenv_path = os.path.join(os.path.dirname(__file__), '..', '.env')
load_dotenv(dotenv_path)

# YAML section -> Config fields it may set
YAML_SECTIONS = {
    "chain": ("iterations", "burn_in", "thin", "n_chains", "seed", "workers",
              "adapt", "target_accept"),
    "priors": ("prior_a", "prior_b2", "prior_c", "prior_d", "prior_a_intercept",
               "prior_b2_intercept", "prior_a_slope", "prior_b2_slope"),
    "report": ("level", "psrf_threshold", "out_dir", "metrics_enabled"),
    "study": ("study_iterations", "study_burn_in", "study_thin", "study_chains"),
    "logging": ("log_level", "log_format"),
}


def _env_bool(name: str, default: bool) -> bool:
    return os.getenv(name, str(default)).lower() in ("1", "true", "yes")


def _coerce(key: str, value: Any, kind: Any) -> Any:
    """Convert a YAML scalar to the field's type, as the env overrides do"""
    if kind == Optional[float]:
        if value is None:
            return None
        kind = float
    elif value is None:
        raise ConfigError(f"missing value for '{key}'")
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes"):
                return True
            if str(value).lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError(f"not a number: {value!r}")
            return float(value)
        if kind is str:
            if isinstance(value, (dict, list)):
                raise ValueError(f"not a string: {value!r}")
            return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value for '{key}': {e}") from e
    return value


@dataclass
class Config:
    """Configuration class for ALR Bayes runs"""

    # Chain settings (100000 sweeps, 10000 burn-in, every 20th kept)
    iterations: int = 100000
    burn_in: int = 10000
    thin: int = 20
    n_chains: int = 3
    seed: int = 2012
    workers: int = 1
    adapt: bool = True
    target_accept: float = 0.44

    # Priors: beta ~ N(a, b2), sigma2 ~ IG(c, d)
    prior_a: float = 0.0
    prior_b2: float = 1000.0
    prior_c: float = 0.1
    prior_d: float = 100.0
    # Per-block overrides; None falls back to the global value
    prior_a_intercept: Optional[float] = None
    prior_b2_intercept: Optional[float] = None
    prior_a_slope: Optional[float] = None
    prior_b2_slope: Optional[float] = None

    # Shortened chains for simulation replicates
    study_iterations: int = 6000
    study_burn_in: int = 1000
    study_thin: int = 5
    study_chains: int = 1

    # Reporting
    level: float = 0.90
    psrf_threshold: float = 1.1
    out_dir: str = "results"
    metrics_enabled: bool = False

    # Logging configuration
    log_level: str = "INFO"
    log_format: str = "console"

    def __post_init__(self):
        """Override defaults with environment variables if present"""
        self.iterations = int(os.getenv("CHAIN_ITERATIONS", self.iterations))
        self.burn_in = int(os.getenv("CHAIN_BURN_IN", self.burn_in))
        self.thin = int(os.getenv("CHAIN_THIN", self.thin))
        self.n_chains = int(os.getenv("CHAIN_COUNT", self.n_chains))
        self.seed = int(os.getenv("CHAIN_SEED", self.seed))
        self.workers = int(os.getenv("WORKERS", self.workers))
        self.study_iterations = int(os.getenv("STUDY_ITERATIONS", self.study_iterations))
        self.study_burn_in = int(os.getenv("STUDY_BURN_IN", self.study_burn_in))
        self.study_thin = int(os.getenv("STUDY_THIN", self.study_thin))
        self.study_chains = int(os.getenv("STUDY_CHAINS", self.study_chains))
        self.level = float(os.getenv("CREDIBLE_LEVEL", self.level))
        self.psrf_threshold = float(os.getenv("PSRF_THRESHOLD", self.psrf_threshold))
        self.out_dir = os.getenv("OUT_DIR", self.out_dir)
        self.metrics_enabled = _env_bool("METRICS_ENABLED", self.metrics_enabled)
        self.prior_b2 = float(os.getenv("PRIOR_B2", self.prior_b2))
        self.prior_c = float(os.getenv("PRIOR_C", self.prior_c))
        self.prior_d = float(os.getenv("PRIOR_D", self.prior_d))
        self.log_level = os.getenv("LOG_LEVEL", self.log_level)
        self.log_format = os.getenv("LOG_FORMAT", self.log_format)

    def update(self, **overrides: Any) -> "Config":
        """Apply non-None overrides in place (CLI flags, YAML values)"""
        known = {f.name for f in fields(self)}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown setting '{key}'")
            if value is not None:
                setattr(self, key, value)
        return self

    def load_yaml(self, path: str) -> "Config":
        """Merge a YAML settings file grouped like YAML_SECTIONS"""
        try:
            with open(path, encoding="utf-8") as handle:
                document = yaml.safe_load(handle) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"config file {path} must hold a mapping")

        kinds = {f.name: f.type for f in fields(self)}
        for section, values in document.items():
            allowed = YAML_SECTIONS.get(section)
            if allowed is None:
                raise ConfigError(f"unknown config section '{section}'")
            if not isinstance(values, (dict, type(None))):
                raise ConfigError(f"config section '{section}' must hold a mapping")
            for key, value in (values or {}).items():
                if key not in allowed:
                    raise ConfigError(f"unknown key '{section}.{key}'")
                setattr(self, key, _coerce(f"{section}.{key}", value, kinds[key]))
        return self

    def validate(self) -> "Config":
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.n_chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept must lie in (0, 1)")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("credible level must lie in (0, 1)")
        variances = [self.prior_b2, self.prior_b2_intercept, self.prior_b2_slope]
        if any(v is not None and v <= 0 for v in variances):
            raise ConfigError("prior variances b2 must be > 0")
        if self.prior_c <= 0 or self.prior_d <= 0:
            raise ConfigError("inverse-gamma hyperparameters c and d must be > 0")
        if self.log_format not in ("json", "console"):
            raise ConfigError("log_format must be 'json' or 'console'")
        if not 0 <= self.study_burn_in < self.study_iterations:
            raise ConfigError("study_burn_in must satisfy 0 <= study_burn_in < study_iterations")
        if self.study_thin < 1 or self.study_chains < 1:
            raise ConfigError("study_thin and study_chains must be >= 1")
        return self

    def to_chain_config(self, **overrides: Any):
        from src.sampler import ChainConfig

        settings = dict(
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            n_chains=self.n_chains,
            adapt=self.adapt,
            target_accept=self.target_accept,
            workers=self.workers,
        )
        settings.update(overrides)
        return ChainConfig(**settings)

    def to_study_chain_config(self):
        """Chain settings of one simulation replicate"""
        return self.to_chain_config(
            iterations=self.study_iterations,
            burn_in=self.study_burn_in,
            thin=self.study_thin,
            n_chains=self.study_chains,
        )

    def to_prior_spec(self, g: int, p: int):
        from src.model import PriorSpec

        def pick(value: Optional[float], fallback: float) -> float:
            return fallback if value is None else value

        return PriorSpec.from_blocks(
            g=g,
            p=p,
            a_intercept=pick(self.prior_a_intercept, self.prior_a),
            b2_intercept=pick(self.prior_b2_intercept, self.prior_b2),
            a_slope=pick(self.prior_a_slope, self.prior_a),
            b2_slope=pick(self.prior_b2_slope, self.prior_b2),
            c=self.prior_c,
            d=self.prior_d,
        )

    def as_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Global configuration instance
config = Config()
