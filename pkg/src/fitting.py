"""
Fit orchestration: chains, summaries, criteria and prior sensitivity sweeps
"""

import re
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.criteria import CriteriaReport, compute_criteria
from src.diagnostics import DEFAULT_LEVEL, PosteriorSummary, max_psrf, summarize_chains
from src.errors import ConfigError
from src.logger import RunLogger, get_logger
from src.model import HYPERPARAMETERS, SCOPES, PriorSpec, RegressionDataset
from src.sampler import MODELS, ChainConfig, ChainOutput, run_chains

logger = get_logger(__name__)

SUBSTITUTION_PATTERN = re.compile(
    r"^\s*(?P<name>[a-z0-9]+)(?:\.(?P<scope>[a-z]+))?\s*=\s*(?P<value>[^\s]+)\s*$"
)


@dataclass(frozen=True)
class FitResult:
    model: str
    chains: Tuple[ChainOutput, ...]
    summaries: Tuple[PosteriorSummary, ...]
    criteria: CriteriaReport
    max_psrf: float
    converged: bool

    @property
    def pooled(self) -> ChainOutput:
        return ChainOutput.pooled(self.chains)

    def summary(self, name: str) -> PosteriorSummary:
        for row in self.summaries:
            if row.name == name:
                return row
        raise KeyError(name)

    def beta_mean(self) -> np.ndarray:
        return self.pooled.mean_state().beta


@dataclass(frozen=True)
class Substitution:
    """One-at-a-time prior change, written ``name[.scope]=value``"""

    hyperparameter: str
    value: float
    scope: str = "all"

    @property
    def label(self) -> str:
        scope = "" if self.scope == "all" else f".{self.scope}"
        return f"{self.hyperparameter}{scope}={self.value:g}"

    def apply(self, priors: PriorSpec) -> PriorSpec:
        return priors.with_substitution(self.hyperparameter, self.value, self.scope)


def parse_substitution(text: str) -> Substitution:
    match = SUBSTITUTION_PATTERN.match(text)
    if match is None:
        raise ConfigError(f"cannot parse sweep entry '{text}', expected name[.scope]=value")
    name, scope = match.group("name"), match.group("scope") or "all"
    if name not in HYPERPARAMETERS:
        raise ConfigError(f"unknown hyperparameter '{name}' in '{text}' (choose from {', '.join(HYPERPARAMETERS)})")
    if scope not in SCOPES or (name in ("c", "d") and scope != "all"):
        raise ConfigError(f"invalid scope '{scope}' for '{name}' in '{text}'")
    try:
        value = float(match.group("value"))
    except ValueError as e:
        raise ConfigError(f"invalid value in sweep entry '{text}'") from e
    if name != "a" and value <= 0:
        raise ConfigError(f"'{name}' must be > 0 in '{text}'")
    return Substitution(hyperparameter=name, value=value, scope=scope)


class FitRunner:
    def __init__(self, chain_config: ChainConfig, level: float = DEFAULT_LEVEL,
                 psrf_threshold: float = 1.1, run_logger: Optional[RunLogger] = None):
        self.chain_config = chain_config
        self.level = level
        self.psrf_threshold = psrf_threshold
        self.run_logger = run_logger or RunLogger(__name__)

    def fit_model(self, data: RegressionDataset, priors: PriorSpec, model: str) -> FitResult:
        """Run every chain of one model and reduce it to summaries and criteria"""
        if model not in MODELS:
            raise ConfigError(f"unknown model '{model}'")
        correlated = model == "correlated"
        start_time = time.time()
        chains = run_chains(data, priors, correlated, self.chain_config)
        summaries = summarize_chains(chains, level=self.level)
        report = compute_criteria(data, chains, correlated, priors=priors)
        worst = max_psrf(summaries)
        converged = True
        if len(chains) > 1 and np.isfinite(worst):
            converged = worst <= self.psrf_threshold
            self.run_logger.log_convergence(model, worst, self.psrf_threshold)
        logger.info("Fit completed", model=model, chains=len(chains),
                    kept_draws=sum(c.n_draws for c in chains),
                    seconds=round(time.time() - start_time, 2))
        return FitResult(
            model=model,
            chains=tuple(chains),
            summaries=tuple(summaries),
            criteria=report,
            max_psrf=worst,
            converged=converged,
        )

    def fit(self, data: RegressionDataset, priors: PriorSpec,
            models: Sequence[str] = MODELS) -> Dict[str, FitResult]:
        results = {model: self.fit_model(data, priors, model) for model in models}
        self.log_results(results)
        return results

    def sensitivity(self, data: RegressionDataset, priors: PriorSpec,
                    substitutions: Sequence[Substitution],
                    models: Sequence[str] = MODELS) -> List[Dict]:
        """Refit once per substitution with the baseline seed; rows of posterior-mean deltas

        Baseline rows come first with the delta columns empty.
        """
        baseline = {model: self.fit_model(data, priors, model) for model in models}
        rows = []
        for model, result in baseline.items():
            for summary in result.summaries:
                rows.append(self._delta_row("baseline", model, summary, None))
        for substitution in substitutions:
            logger.info("Refitting with substituted prior", substitution=substitution.label)
            changed = substitution.apply(priors)
            for model in models:
                refit = self.fit_model(data, changed, model)
                for summary in baseline[model].summaries:
                    rows.append(self._delta_row(substitution.label, model, summary,
                                                refit.summary(summary.name)))
        return rows

    @staticmethod
    def _delta_row(label: str, model: str, base: PosteriorSummary,
                   other: Optional[PosteriorSummary]) -> Dict:
        row = {
            "substitution": label,
            "model": model,
            "parameter": base.name,
            "baseline_mean": base.mean,
            "mean": base.mean if other is None else other.mean,
            "delta": float("nan"),
            "baseline_sd": base.sd,
            "delta_over_sd": float("nan"),
        }
        if other is not None:
            row["delta"] = other.mean - base.mean
            row["delta_over_sd"] = row["delta"] / base.sd if base.sd > 0 else float("nan")
        return row

    def log_results(self, results: Dict[str, FitResult]) -> None:
        """Log a short per-model summary at the end of a fit"""
        logger.info("=== FIT SUMMARY ===")
        for model, result in results.items():
            logger.info(
                "Model fitted",
                model=model,
                max_psrf=None if not np.isfinite(result.max_psrf) else round(result.max_psrf, 4),
                dic=round(result.criteria.dic, 4),
                lpml=round(result.criteria.lpml, 4),
                converged=result.converged,
            )
        logger.info("=== END SUMMARY ===")
