"""
Simulation harness for frequentist coverage of the Bayesian fits

Each replicate draws covariates and correlated Gaussian errors, fits the
requested models, and checks whether every true parameter lies in its
credible interval. Aggregates are reduced in replicate order.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.criteria import compute_criteria
from src.diagnostics import DEFAULT_LEVEL, summarize_chains
from src.errors import AlrError, ScenarioError
from src.logger import RunLogger, get_logger
from src.model import (
    ParameterState,
    PriorSpec,
    RegressionDataset,
    correlation_cholesky,
    is_positive_definite,
    n_rho,
    parameter_names,
)
from src.sampler import MODELS, ChainConfig, ChainOutput, run_chain
from src.simplex import CompositionDataset, Composition, alr_inverse_matrix

logger = get_logger(__name__)
run_logger = RunLogger(__name__)

STUDY_SAMPLE_SIZES = (70, 100, 150)
VOLLEYBALL_RHO = (0.45, 0.37, 0.20)


@dataclass(frozen=True)
class CovariateGenerator:
    """Bernoulli(prob) or Normal(mean, sd) covariate column"""

    kind: str
    params: Tuple[float, ...]

    def __post_init__(self):
        params = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", params)
        if self.kind == "bernoulli":
            if len(params) != 1 or not 0.0 <= params[0] <= 1.0:
                raise ScenarioError(f"bernoulli covariate needs one probability in [0, 1], got {params}")
        elif self.kind == "normal":
            if len(params) != 2 or params[1] < 0:
                raise ScenarioError(f"normal covariate needs (mean, sd >= 0), got {params}")
        else:
            raise ScenarioError(f"unknown covariate kind '{self.kind}'")

    @property
    def mean(self) -> float:
        return self.params[0]

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "bernoulli":
            return (rng.random(n) < self.params[0]).astype(float)
        return rng.normal(self.params[0], self.params[1], size=n)

    @classmethod
    def from_dict(cls, spec: Dict[str, Any]) -> "CovariateGenerator":
        kind = str(spec.get("kind", "")).lower()
        try:
            if kind == "bernoulli":
                return cls(kind, (spec["p"],))
            if kind == "normal":
                return cls(kind, (spec["mean"], spec["sd"]))
        except KeyError as e:
            raise ScenarioError(f"{kind} covariate is missing '{e.args[0]}'") from e
        raise ScenarioError(f"unknown covariate kind '{spec.get('kind')}'")

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": self.params[0]}
        return {"kind": "normal", "mean": self.params[0], "sd": self.params[1]}


@dataclass(frozen=True)
class SimScenario:
    """Truth and design of a simulation study

    ``marginal_mean`` is recorded metadata only; coverage is always judged
    against ``true_beta``.
    """

    n: int
    true_beta: np.ndarray
    true_sigma2: np.ndarray
    true_rho: np.ndarray
    covariate_gens: Tuple[CovariateGenerator, ...]
    replicates: int = 100
    level: float = DEFAULT_LEVEL
    name: str = "custom"
    marginal_mean: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.true_beta, dtype=float))
        sigma2 = np.atleast_1d(np.asarray(self.true_sigma2, dtype=float))
        g = sigma2.size
        rho = np.asarray(self.true_rho, dtype=float).ravel()
        if rho.size == 0:
            rho = np.zeros(n_rho(g))
        gens = tuple(self.covariate_gens)
        if beta.shape != (len(gens) + 1, g):
            raise ScenarioError(
                f"true_beta must be ({len(gens) + 1}, {g}) for {len(gens)} covariates, got {beta.shape}"
            )
        if rho.size != n_rho(g):
            raise ScenarioError(f"true_rho needs {n_rho(g)} entries, got {rho.size}")
        if np.any(~(sigma2 > 0)) or not np.all(np.isfinite(beta)):
            raise ScenarioError("true_sigma2 must be > 0 and true_beta finite")
        if not is_positive_definite(rho, g):
            raise ScenarioError(f"true_rho {rho.tolist()} does not give a positive definite matrix")
        if self.replicates < 1:
            raise ScenarioError("replicates must be >= 1")
        if self.n <= len(gens) + 1:
            raise ScenarioError(f"n={self.n} is too small for {len(gens)} covariates")
        if not 0.0 < self.level < 1.0:
            raise ScenarioError("level must lie in (0, 1)")
        for name, value in (("true_beta", beta), ("true_sigma2", sigma2), ("true_rho", rho)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "covariate_gens", gens)

    @property
    def g(self) -> int:
        return self.true_sigma2.size

    @property
    def p(self) -> int:
        return len(self.covariate_gens)

    def truth(self) -> ParameterState:
        return ParameterState(self.true_beta, self.true_sigma2, self.true_rho)

    def truth_by_name(self, correlated: bool) -> Dict[str, float]:
        values = self.truth().to_vector(correlated)
        return dict(zip(parameter_names(self.g, self.p, correlated), values.tolist()))

    def with_sample_size(self, n: int) -> "SimScenario":
        return replace(self, n=n)

    @classmethod
    def volleyball(cls, correlated_truth: bool = False, n: int = 100, replicates: int = 100) -> "SimScenario":
        """Volleyball-like design: z1 ~ Bernoulli(0.8), z2 ~ Normal(0.5, 0.1)"""
        return cls(
            n=n,
            true_beta=np.array([[0.5, -1.0, -2.0], [0.1, 0.1, 0.1], [0.1, 0.1, 0.1]]),
            true_sigma2=np.array([0.06, 0.2, 0.3]),
            true_rho=np.array(VOLLEYBALL_RHO if correlated_truth else (0.0, 0.0, 0.0)),
            covariate_gens=(CovariateGenerator("bernoulli", (0.8,)),
                            CovariateGenerator("normal", (0.5, 0.1))),
            replicates=replicates,
            name="volleyball-rho" if correlated_truth else "volleyball",
            marginal_mean=(0.6, -1.0, -1.9),
        )

    @classmethod
    def builtin(cls, name: str) -> "SimScenario":
        if name == "volleyball":
            return cls.volleyball()
        if name == "volleyball-rho":
            return cls.volleyball(correlated_truth=True)
        raise ScenarioError(f"unknown built-in scenario '{name}' (choose volleyball or volleyball-rho)")

    @classmethod
    def from_dict(cls, spec: Dict[str, Any]) -> "SimScenario":
        if not isinstance(spec, dict):
            raise ScenarioError("scenario must be a JSON object")
        base = spec.get("base")
        if base is not None:
            merged = cls.builtin(base).to_dict()
            merged.update({k: v for k, v in spec.items() if k != "base"})
            spec = merged
        try:
            gens = tuple(CovariateGenerator.from_dict(g) for g in spec["covariates"])
            g = len(spec["true_sigma2"])
            return cls(
                n=int(spec["n"]),
                true_beta=np.asarray(spec["true_beta"], dtype=float),
                true_sigma2=np.asarray(spec["true_sigma2"], dtype=float),
                true_rho=np.asarray(spec.get("true_rho", [0.0] * n_rho(g)), dtype=float),
                covariate_gens=gens,
                replicates=int(spec.get("replicates", 100)),
                level=float(spec.get("level", DEFAULT_LEVEL)),
                name=str(spec.get("name", "custom")),
                marginal_mean=tuple(spec["marginal_mean"]) if spec.get("marginal_mean") else None,
            )
        except KeyError as e:
            raise ScenarioError(f"scenario is missing '{e.args[0]}'") from e
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"invalid scenario value: {e}") from e

    @classmethod
    def from_json(cls, path: str) -> "SimScenario":
        try:
            with open(path, encoding="utf-8") as handle:
                spec = json.load(handle)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
        except OSError as e:
            raise ScenarioError(f"cannot read scenario {path}: {e}") from e
        return cls.from_dict(spec)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "true_beta": self.true_beta.tolist(),
            "true_sigma2": self.true_sigma2.tolist(),
            "true_rho": self.true_rho.tolist(),
            "covariates": [gen.to_dict() for gen in self.covariate_gens],
            "replicates": self.replicates,
            "level": self.level,
            "marginal_mean": list(self.marginal_mean) if self.marginal_mean else None,
        }


@dataclass(frozen=True)
class SimulatedDataset:
    data: RegressionDataset
    truth: ParameterState
    compositions: Optional[CompositionDataset] = None


def generate_dataset(scenario: SimScenario, rng: np.random.Generator,
                     with_compositions: bool = False) -> SimulatedDataset:
    """y = [1, z] beta + eps with eps_i ~ N_g(0, diag(sigma) R diag(sigma))"""
    chol = correlation_cholesky(scenario.true_rho, scenario.g)
    z = np.zeros((scenario.n, 0))
    if scenario.covariate_gens:
        z = np.column_stack([gen.draw(scenario.n, rng) for gen in scenario.covariate_gens])
    noise = rng.standard_normal((scenario.n, scenario.g)) @ chol.T
    y = scenario.true_beta[0] + z @ scenario.true_beta[1:] + noise * np.sqrt(scenario.true_sigma2)
    data = RegressionDataset(
        y=y,
        z=z,
        covariate_names=tuple(f"z{l}" for l in range(1, scenario.p + 1)),
    )
    compositions = None
    if with_compositions:
        compositions = CompositionDataset(rows=tuple(Composition(row) for row in alr_inverse_matrix(y)))
    return SimulatedDataset(data=data, truth=scenario.truth(), compositions=compositions)


def coverage(interval: Tuple[float, float], truth: float) -> bool:
    """Inclusive interval check"""
    lower, upper = interval
    return bool(lower <= truth <= upper)


@dataclass(frozen=True)
class ModelReplicate:
    """One model's fit on one replicate; ``error`` set when it failed"""

    model: str
    means: Dict[str, float] = field(default_factory=dict)
    sds: Dict[str, float] = field(default_factory=dict)
    covered: Dict[str, bool] = field(default_factory=dict)
    criteria: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def replicate_seed(seed: int, replicate: int) -> int:
    return seed + replicate


def _fit_model(data: RegressionDataset, priors: PriorSpec, correlated: bool,
               config: ChainConfig, seed: int) -> List[ChainOutput]:
    return [
        run_chain(data, priors, correlated, config,
                  rng=np.random.default_rng([seed, 2, chain]), chain=chain, jitter=config.jitter)
        for chain in range(config.n_chains)
    ]


def run_replicate(scenario: SimScenario, priors: PriorSpec, config: ChainConfig,
                  replicate: int, models: Sequence[str] = MODELS) -> Dict[str, ModelReplicate]:
    """Generate replicate ``replicate`` and fit each requested model to it"""
    seed = replicate_seed(config.seed, replicate)
    simulated = generate_dataset(scenario, np.random.default_rng([seed, 1]))
    results = {}
    for model in models:
        correlated = model == "correlated"
        truth = scenario.truth_by_name(correlated)
        try:
            chains = _fit_model(simulated.data, priors, correlated, config, seed)
            summaries = summarize_chains(chains, level=scenario.level)
            report = compute_criteria(simulated.data, chains, correlated, priors=priors)
        except (AlrError, np.linalg.LinAlgError, FloatingPointError) as e:
            run_logger.log_replicate_failed(replicate, model, e)
            results[model] = ModelReplicate(model=model, error=f"{type(e).__name__}: {e}")
            continue
        results[model] = ModelReplicate(
            model=model,
            means={s.name: s.mean for s in summaries},
            sds={s.name: s.sd for s in summaries},
            covered={s.name: coverage((s.lower, s.upper), truth[s.name]) for s in summaries},
            criteria={"eaic": report.eaic, "ebic": report.ebic, "dic": report.dic, "lpml": report.lpml},
        )
    logger.debug("Replicate finished", replicate=replicate, n=scenario.n)
    return results


def _replicate_job(job) -> Dict[str, ModelReplicate]:
    scenario, priors, config, replicate, models = job
    return run_replicate(scenario, priors, config, replicate, models)


@dataclass(frozen=True)
class ParameterAggregate:
    """Mean posterior mean, mean posterior sd and coverage over replicates"""

    n: int
    model: str
    parameter: str
    truth: float
    mean: float
    sd: float
    cp: float
    replicates: int


@dataclass(frozen=True)
class StudyResult:
    scenario: SimScenario
    rows: Tuple[ParameterAggregate, ...]
    criteria: Dict[str, Dict[str, float]]
    completed: Dict[str, int]
    failed: Dict[str, int]
    seed: int
    # criterion -> model -> replicates where that model scored best
    preferred: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def rows_for(self, model: str) -> List[ParameterAggregate]:
        return [row for row in self.rows if row.model == model]

    def row(self, model: str, parameter: str) -> ParameterAggregate:
        for candidate in self.rows:
            if candidate.model == model and candidate.parameter == parameter:
                return candidate
        raise KeyError(f"{model}/{parameter}")

    def as_records(self) -> List[Dict[str, Any]]:
        return [dict(row.__dict__) for row in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "seed": self.seed,
            "completed": self.completed,
            "failed": self.failed,
            "criteria": self.criteria,
            "preferred": self.preferred,
            "parameters": self.as_records(),
            "notes": {
                "coverage_truth": "true_beta, true_sigma2 and true_rho",
                "marginal_mean": "recorded only; not used for coverage",
            },
        }


def aggregate(scenario: SimScenario, replicates: Sequence[Dict[str, ModelReplicate]],
              models: Sequence[str], seed: int) -> StudyResult:
    """Reduce per-replicate fits in replicate order"""
    rows = []
    criteria: Dict[str, Dict[str, float]] = {}
    completed: Dict[str, int] = {}
    failed: Dict[str, int] = {}
    for model in models:
        correlated = model == "correlated"
        fits = [rep[model] for rep in replicates if rep[model].ok]
        completed[model] = len(fits)
        failed[model] = len(replicates) - len(fits)
        for name, truth in scenario.truth_by_name(correlated).items():
            if fits:
                mean = float(np.mean([fit.means[name] for fit in fits]))
                sd = float(np.mean([fit.sds[name] for fit in fits]))
                cp = float(np.mean([fit.covered[name] for fit in fits]))
            else:
                mean = sd = cp = float("nan")
            rows.append(ParameterAggregate(scenario.n, model, name, truth, mean, sd, cp, len(fits)))
        criteria[model] = {
            key: float(np.mean([fit.criteria[key] for fit in fits])) if fits else float("nan")
            for key in ("eaic", "ebic", "dic", "lpml")
        }
    return StudyResult(scenario=scenario, rows=tuple(rows), criteria=criteria,
                       completed=completed, failed=failed, seed=seed,
                       preferred=count_preferred(replicates, models))


def count_preferred(replicates: Sequence[Dict[str, ModelReplicate]],
                    models: Sequence[str]) -> Dict[str, Dict[str, int]]:
    """Per criterion, how often each model wins among replicates where every model fitted

    Lower EAIC, EBIC and DIC win; higher LPML wins. Ties go to the first model.
    """
    counts = {key: {model: 0 for model in models} for key in ("eaic", "ebic", "dic", "lpml")}
    if len(models) < 2:
        return counts
    for rep in replicates:
        if not all(rep[model].ok for model in models):
            continue
        for key, tally in counts.items():
            sign = -1.0 if key == "lpml" else 1.0
            scores = [sign * rep[model].criteria[key] for model in models]
            tally[models[int(np.argmin(scores))]] += 1
    return counts


def run_study(scenario: SimScenario, priors: PriorSpec, config: ChainConfig,
              models: Sequence[str] = MODELS, workers: Optional[int] = None) -> StudyResult:
    """Fit every replicate of ``scenario``; replicate r is seeded from seed + r"""
    workers = config.workers if workers is None else workers
    chain_config = replace(config, workers=1)
    jobs = [(scenario, priors, chain_config, r, tuple(models)) for r in range(scenario.replicates)]
    logger.info("Starting simulation study", scenario=scenario.name, n=scenario.n,
                replicates=scenario.replicates, models=list(models), workers=workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            replicates = list(executor.map(_replicate_job, jobs))
    else:
        replicates = [_replicate_job(job) for job in jobs]
    result = aggregate(scenario, replicates, models, config.seed)
    logger.info("Simulation study completed", scenario=scenario.name, n=scenario.n,
                completed=result.completed, failed=result.failed,
                dic_preferred=result.preferred.get("dic"))
    return result


def run_sample_sizes(scenario: SimScenario, priors: PriorSpec, config: ChainConfig,
                     sizes: Sequence[int] = STUDY_SAMPLE_SIZES, models: Sequence[str] = MODELS,
                     workers: Optional[int] = None) -> List[StudyResult]:
    """The same study at several sample sizes"""
    return [run_study(scenario.with_sample_size(n), priors, config, models, workers) for n in sizes]
