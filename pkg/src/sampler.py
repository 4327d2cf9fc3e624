"""
MCMC engines for the ALR regression

Uncorrelated errors use an exact Gibbs sampler built from the conjugate full
conditionals. Correlated errors use single-site random-walk
Metropolis-within-Gibbs with Robbins-Monro scale adaptation during burn-in.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from src.errors import ConfigError, InvalidStateError, NotPositiveDefiniteError
from src.logger import RunLogger, get_logger
from src.model import (
    LOG_2PI,
    LOG_HALF,
    ParameterState,
    PriorSpec,
    RegressionDataset,
    correlation_cholesky,
    n_rho,
    parameter_names,
)

logger = get_logger(__name__)
run_logger = RunLogger(__name__)

MODELS = ("uncorrelated", "correlated")

# Scale of a 1-D random-walk proposal relative to the target's sd
RW_FACTOR = 2.4
MAX_LOG_SIGMA2_SCALE = 2.0
MAX_RHO_SCALE = 0.5
ADAPTATION_DECAY = 0.6


def model_name(correlated: bool) -> str:
    return MODELS[int(bool(correlated))]


@dataclass(frozen=True)
class ChainConfig:
    """Settings for one or more chains

    Kept sweeps are t = burn_in + thin, burn_in + 2 thin, ... <= iterations.
    ``proposal_scales`` overrides the default random-walk scale of named
    parameters and only matters for the correlated model.
    """

    iterations: int = 100000
    burn_in: int = 10000
    thin: int = 20
    seed: int = 2012
    n_chains: int = 3
    proposal_scales: Optional[Dict[str, float]] = None
    adapt: bool = True
    target_accept: float = 0.44
    adapt_interval: int = 50
    workers: int = 1
    jitter: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(
                f"burn_in must satisfy 0 <= burn_in < iterations, got {self.burn_in}/{self.iterations}"
            )
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept must lie in (0, 1)")
        if self.adapt_interval < 1 or self.workers < 1:
            raise ConfigError("adapt_interval and workers must be >= 1")
        if self.jitter < 0:
            raise ConfigError("jitter must be >= 0")
        if self.proposal_scales and any(s <= 0 for s in self.proposal_scales.values()):
            raise ConfigError("proposal scales must be > 0")

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def kept_iterations(self) -> np.ndarray:
        return self.burn_in + self.thin * np.arange(1, self.n_kept + 1)


@dataclass(frozen=True)
class ChainOutput:
    """Thinned post-burn-in draws of one chain (or several pooled)

    Columns of ``draws`` follow ``parameter_names``: beta row-major, sigma2,
    then rho for the correlated model.
    """

    draws: np.ndarray
    parameter_names: Tuple[str, ...]
    g: int
    p: int
    correlated: bool
    seed_used: int
    chain: int = 0
    kept_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    acceptance: Dict[str, float] = field(default_factory=dict)
    proposal_scales: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        draws = np.array(self.draws, dtype=float).reshape(-1, len(self.parameter_names))
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        kept = np.asarray(self.kept_iterations, dtype=int)
        if kept.size != draws.shape[0]:
            kept = np.arange(1, draws.shape[0] + 1)
        object.__setattr__(self, "kept_iterations", kept)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def model(self) -> str:
        return model_name(self.correlated)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.parameter_names.index(name)]

    def state(self, index: int) -> ParameterState:
        return ParameterState.from_vector(self.draws[index], self.g, self.p, self.correlated)

    def states(self) -> Iterator[ParameterState]:
        for index in range(self.n_draws):
            yield self.state(index)

    def mean_state(self) -> ParameterState:
        """Componentwise posterior mean; may fall outside the PD support"""
        return ParameterState.from_vector(self.draws.mean(axis=0), self.g, self.p, self.correlated)

    @classmethod
    def pooled(cls, chains: Sequence["ChainOutput"]) -> "ChainOutput":
        """Stack the draws of several chains of the same model"""
        if not chains:
            raise ValueError("no chains to pool")
        first = chains[0]
        if any(c.parameter_names != first.parameter_names for c in chains):
            raise ValueError("cannot pool chains with different parameters")
        return cls(
            draws=np.vstack([c.draws for c in chains]),
            parameter_names=first.parameter_names,
            g=first.g,
            p=first.p,
            correlated=first.correlated,
            seed_used=first.seed_used,
            chain=-1,
            kept_iterations=np.concatenate([c.kept_iterations for c in chains]),
        )


# Full conditionals of the uncorrelated model

def beta0_conditional(j: int, data: RegressionDataset, state: ParameterState,
                      priors: PriorSpec) -> Tuple[float, float]:
    """(mean, variance) of beta_0j given everything else"""
    a, b2 = priors.a[0, j], priors.b2[0, j]
    sigma2 = state.sigma2[j]
    mu = data.y[:, j] - data.z @ state.beta[1:, j]
    precision = 1.0 / b2 + data.n / sigma2
    return float((a / b2 + mu.sum() / sigma2) / precision), float(1.0 / precision)


def beta_conditional(l: int, j: int, data: RegressionDataset, state: ParameterState,
                     priors: PriorSpec) -> Tuple[float, float]:
    """(mean, variance) of slope beta_lj (l >= 1) given everything else"""
    if l < 1:
        return beta0_conditional(j, data, state, priors)
    a, b2 = priors.a[l, j], priors.b2[l, j]
    sigma2 = state.sigma2[j]
    z = data.z[:, l - 1]
    # Partial residual with every term except beta_lj removed
    theta = data.y[:, j] - state.beta[0, j] - data.z @ state.beta[1:, j] + z * state.beta[l, j]
    precision = 1.0 / b2 + (z @ z) / sigma2
    return float((a / b2 + (z @ theta) / sigma2) / precision), float(1.0 / precision)


def sigma2_conditional(j: int, data: RegressionDataset, state: ParameterState,
                       priors: PriorSpec) -> Tuple[float, float]:
    """(shape, scale) of the inverse-gamma full conditional of sigma2_j"""
    eps = data.y[:, j] - data.design() @ state.beta[:, j]
    return float(priors.c[j] + data.n / 2.0), float(priors.d[j] + (eps @ eps) / 2.0)


def sample_inverse_gamma(shape: float, scale: float, rng: np.random.Generator,
                         size=None):
    return 1.0 / rng.gamma(shape, 1.0 / scale, size=size)


def gibbs_update_beta0(j: int, data: RegressionDataset, state: ParameterState,
                       priors: PriorSpec, rng: np.random.Generator) -> float:
    mean, variance = beta0_conditional(j, data, state, priors)
    return float(mean + np.sqrt(variance) * rng.standard_normal())


def gibbs_update_beta_l(l: int, j: int, data: RegressionDataset, state: ParameterState,
                        priors: PriorSpec, rng: np.random.Generator) -> float:
    mean, variance = beta_conditional(l, j, data, state, priors)
    return float(mean + np.sqrt(variance) * rng.standard_normal())


def gibbs_update_sigma2(j: int, data: RegressionDataset, state: ParameterState,
                        priors: PriorSpec, rng: np.random.Generator) -> float:
    shape, scale = sigma2_conditional(j, data, state, priors)
    return float(sample_inverse_gamma(shape, scale, rng))


class _GibbsKernel:
    """In-place Gibbs sweeps keeping the residual matrix current"""

    def __init__(self, data: RegressionDataset, priors: PriorSpec, state: ParameterState):
        self.y = data.y
        self.x = data.design()
        self.xx = (self.x ** 2).sum(axis=0)
        self.n = data.n
        self.priors = priors
        self.beta = np.array(state.beta, dtype=float)
        self.sigma2 = np.array(state.sigma2, dtype=float)

    def sweep(self, rng: np.random.Generator) -> None:
        """beta_0j, the slopes beta_lj, then sigma2_j, for each response j"""
        a, b2, c, d = self.priors.a, self.priors.b2, self.priors.c, self.priors.d
        k, g = self.beta.shape
        resid = self.y - self.x @ self.beta
        normals = rng.standard_normal((g, k))
        for j in range(g):
            inv_sigma2 = 1.0 / self.sigma2[j]
            e = resid[:, j]
            for l in range(k):
                x = self.x[:, l]
                old = self.beta[l, j]
                precision = 1.0 / b2[l, j] + self.xx[l] * inv_sigma2
                mean = (a[l, j] / b2[l, j] + (x @ e + old * self.xx[l]) * inv_sigma2) / precision
                new = mean + normals[j, l] / np.sqrt(precision)
                e -= (new - old) * x
                self.beta[l, j] = new
            scale = d[j] + (e @ e) / 2.0
            self.sigma2[j] = sample_inverse_gamma(c[j] + self.n / 2.0, scale, rng)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta.ravel(), self.sigma2])

    def state(self) -> ParameterState:
        return ParameterState(self.beta.copy(), self.sigma2.copy())


def gibbs_sweep(data: RegressionDataset, state: ParameterState, priors: PriorSpec,
                rng: np.random.Generator) -> ParameterState:
    """One full Gibbs scan of the uncorrelated model"""
    kernel = _GibbsKernel(data, priors, state)
    kernel.sweep(rng)
    return kernel.state()


class _CorrelatedTarget:
    """Mutable correlated-model state with cached residuals E, S = E'E and R^-1

    Site order matches ``ParameterState.to_vector``: beta row-major, then
    log sigma2_j, then rho in upper-triangle order.
    """

    def __init__(self, data: RegressionDataset, priors: PriorSpec, state: ParameterState):
        self.y = data.y
        self.x = data.design()
        self.xx = (self.x ** 2).sum(axis=0)
        self.n, self.g = data.n, data.g
        self.priors = priors
        self.beta = np.array(state.beta, dtype=float)
        self.log_sigma2 = np.log(state.sigma2)
        self.rho = np.array(state.rho if state.rho.size else np.zeros(n_rho(self.g)), dtype=float)
        self.rinv, self.logdet = self._factor(self.rho)
        self.refresh()

    @property
    def n_sites(self) -> int:
        return self.beta.size + self.g + self.rho.size

    def _factor(self, rho: np.ndarray) -> Tuple[np.ndarray, float]:
        chol = correlation_cholesky(rho, self.g)
        rinv = linalg.cho_solve((chol, True), np.eye(self.g))
        return rinv, float(2.0 * np.log(np.diag(chol)).sum())

    def refresh(self) -> None:
        self.resid = self.y - self.x @ self.beta
        self.cross = self.resid.T @ self.resid

    def _loglik(self, cross: np.ndarray, log_sigma2: np.ndarray, rinv: np.ndarray,
                logdet: float) -> float:
        inv_sd = np.exp(-0.5 * log_sigma2)
        quad = np.sum(rinv * cross * np.outer(inv_sd, inv_sd))
        return float(-0.5 * (self.n * (self.g * LOG_2PI + log_sigma2.sum() + logdet) + quad))

    def loglik(self) -> float:
        return self._loglik(self.cross, self.log_sigma2, self.rinv, self.logdet)

    def log_posterior(self) -> float:
        a, b2, c, d = self.priors.a, self.priors.b2, self.priors.c, self.priors.d
        sigma2 = np.exp(self.log_sigma2)
        prior = -0.5 * np.sum(LOG_2PI + np.log(b2) + (self.beta - a) ** 2 / b2)
        prior += np.sum(c * np.log(d) - gammaln(c) - (c + 1.0) * self.log_sigma2 - d / sigma2)
        prior += LOG_HALF * self.rho.size
        return self.loglik() + float(prior)

    def _update_beta(self, l: int, j: int, delta: float, log_u: float, current: float):
        old = self.beta[l, j]
        new = old + delta
        x = self.x[:, l]
        v = self.resid.T @ x
        column = self.cross[:, j] - delta * v
        column[j] = self.cross[j, j] - 2.0 * delta * v[j] + delta ** 2 * self.xx[l]
        cross = self.cross.copy()
        cross[:, j] = column
        cross[j, :] = column
        proposed = self._loglik(cross, self.log_sigma2, self.rinv, self.logdet)
        a, b2 = self.priors.a[l, j], self.priors.b2[l, j]
        log_ratio = proposed - current + ((old - a) ** 2 - (new - a) ** 2) / (2.0 * b2)
        if log_u < log_ratio:
            self.beta[l, j] = new
            self.resid[:, j] -= delta * x
            self.cross = cross
            return True, proposed
        return False, current

    def _update_sigma2(self, j: int, step: float, log_u: float, current: float):
        old = self.log_sigma2[j]
        new = old + step
        log_sigma2 = self.log_sigma2.copy()
        log_sigma2[j] = new
        proposed = self._loglik(self.cross, log_sigma2, self.rinv, self.logdet)
        c, d = self.priors.c[j], self.priors.d[j]
        # inverse-gamma prior on sigma2 plus the log-scale Jacobian
        log_prior = -(c + 1.0) * (new - old) - d * (np.exp(-new) - np.exp(-old))
        log_ratio = proposed - current + log_prior + (new - old)
        if log_u < log_ratio:
            self.log_sigma2 = log_sigma2
            return True, proposed
        return False, current

    def _update_rho(self, k: int, step: float, log_u: float, current: float):
        rho = self.rho.copy()
        rho[k] += step
        try:
            rinv, logdet = self._factor(rho)
        except NotPositiveDefiniteError:
            return False, current
        proposed = self._loglik(self.cross, self.log_sigma2, rinv, logdet)
        if log_u < proposed - current:
            self.rho, self.rinv, self.logdet = rho, rinv, logdet
            return True, proposed
        return False, current

    def sweep(self, scales: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One scan over every site; returns the per-site accept flags"""
        self.refresh()
        steps = rng.standard_normal(self.n_sites) * scales
        log_u = np.log(rng.random(self.n_sites))
        accepted = np.zeros(self.n_sites, dtype=bool)
        k, g = self.beta.shape
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            current = self.loglik()
            site = 0
            for l in range(k):
                for j in range(g):
                    accepted[site], current = self._update_beta(l, j, steps[site], log_u[site], current)
                    site += 1
            for j in range(g):
                accepted[site], current = self._update_sigma2(j, steps[site], log_u[site], current)
                site += 1
            for r in range(self.rho.size):
                accepted[site], current = self._update_rho(r, steps[site], log_u[site], current)
                site += 1
        return accepted

    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta.ravel(), np.exp(self.log_sigma2), self.rho])

    def state(self) -> ParameterState:
        return ParameterState(self.beta.copy(), np.exp(self.log_sigma2), self.rho.copy())


def default_proposal_scales(data: RegressionDataset, priors: PriorSpec,
                            state: ParameterState) -> np.ndarray:
    """Random-walk scales per site, 2.4 times an approximate conditional sd"""
    xx = (data.design() ** 2).sum(axis=0)
    beta_sd = 1.0 / np.sqrt(1.0 / priors.b2 + xx[:, np.newaxis] / state.sigma2[np.newaxis, :])
    log_sigma2 = np.minimum(MAX_LOG_SIGMA2_SCALE, RW_FACTOR * np.sqrt(2.0 / (data.n + 2.0 * priors.c + 1.0)))
    rho = np.full(n_rho(data.g), min(MAX_RHO_SCALE, RW_FACTOR / np.sqrt(data.n + 4.0)))
    return np.concatenate([RW_FACTOR * beta_sd.ravel(), log_sigma2, rho])


def resolve_scales(defaults: np.ndarray, names: Sequence[str],
                   overrides: Optional[Mapping[str, float]]) -> np.ndarray:
    scales = np.array(defaults, dtype=float)
    for name, value in (overrides or {}).items():
        if name not in names:
            raise ConfigError(f"proposal scale given for unknown parameter '{name}'")
        scales[list(names).index(name)] = value
    return scales


def adapt_scales(accept_history: np.ndarray, scales: np.ndarray, step: int,
                 target_accept: float = 0.44) -> np.ndarray:
    """Robbins-Monro update: log s += step^-0.6 * (rate - target_accept)

    ``accept_history`` holds accept flags (sweeps x sites, or one sweep);
    ``step`` counts adaptation rounds from 1.
    """
    rates = np.mean(np.atleast_2d(np.asarray(accept_history, dtype=float)), axis=0)
    gain = float(step) ** -ADAPTATION_DECAY
    return np.asarray(scales, dtype=float) * np.exp(gain * (rates - target_accept))


def mwg_step(data: RegressionDataset, state: ParameterState, priors: PriorSpec,
             scales: Sequence[float], rng: np.random.Generator) -> Tuple[ParameterState, np.ndarray]:
    """One Metropolis-within-Gibbs sweep of the correlated model"""
    if not state.in_support():
        raise InvalidStateError("mwg_step needs an in-support state")
    target = _CorrelatedTarget(data, priors, state)
    scales = np.asarray(scales, dtype=float)
    if scales.size != target.n_sites:
        raise ConfigError(f"expected {target.n_sites} proposal scales, got {scales.size}")
    accepted = target.sweep(scales, rng)
    return target.state(), accepted


def initial_state(data: RegressionDataset, priors: PriorSpec, correlated: bool,
                  rng: Optional[np.random.Generator] = None, jitter: float = 0.0) -> ParameterState:
    """Least-squares start (prior start without enough data), optionally jittered"""
    x = data.design()
    if data.n > data.p + 1:
        beta = np.linalg.lstsq(x, data.y, rcond=None)[0]
        resid = data.y - x @ beta
        sigma2 = np.maximum((resid ** 2).sum(axis=0) / (data.n - data.p - 1), 1e-8)
    else:
        beta = np.array(priors.a, dtype=float)
        sigma2 = priors.d / (priors.c + 1.0)
    if rng is not None and jitter > 0:
        beta = beta + rng.normal(0.0, jitter, size=beta.shape)
        sigma2 = sigma2 * np.exp(rng.normal(0.0, jitter, size=sigma2.shape))
    rho = np.zeros(n_rho(data.g)) if correlated else np.zeros(0)
    return ParameterState(beta=beta, sigma2=sigma2, rho=rho)


def run_chain(data: RegressionDataset, priors: PriorSpec, correlated: bool, config: ChainConfig,
              rng: Optional[np.random.Generator] = None, chain: int = 0,
              start: Optional[ParameterState] = None, jitter: float = 0.0) -> ChainOutput:
    """Run one chain, discard burn-in and keep every thin-th sweep

    Without an explicit ``rng`` the chain draws from ``default_rng(seed + chain)``.
    """
    seed = config.seed + chain
    rng = rng if rng is not None else np.random.default_rng(seed)
    names = parameter_names(data.g, data.p, correlated)
    model = model_name(correlated)
    if start is None:
        start = initial_state(data, priors, correlated, rng=rng, jitter=jitter)
    if not start.in_support():
        raise InvalidStateError("initial state is outside the parameter support")

    run_logger.log_chain_start(model, chain, seed, config.iterations)
    draws = np.empty((config.n_kept, len(names)))
    acceptance: Dict[str, float] = {}
    final_scales: Dict[str, float] = {}
    row = 0

    if correlated:
        kernel = _CorrelatedTarget(data, priors, start)
        scales = resolve_scales(default_proposal_scales(data, priors, start), names,
                                config.proposal_scales)
        history = np.zeros((config.adapt_interval, kernel.n_sites), dtype=bool)
        kept_accepts = np.zeros(kernel.n_sites)
        rounds = 0
        for t in range(1, config.iterations + 1):
            flags = kernel.sweep(scales, rng)
            if t <= config.burn_in:
                history[(t - 1) % config.adapt_interval] = flags
                if config.adapt and t % config.adapt_interval == 0:
                    rounds += 1
                    scales = adapt_scales(history, scales, rounds, config.target_accept)
            else:
                kept_accepts += flags
                if (t - config.burn_in) % config.thin == 0:
                    draws[row] = kernel.vector()
                    row += 1
        rates = kept_accepts / (config.iterations - config.burn_in)
        acceptance = {name: float(rate) for name, rate in zip(names, rates)}
        final_scales = {name: float(scale) for name, scale in zip(names, scales)}
        logger.debug("Proposal scales after burn-in", model=model, chain=chain,
                     adaptation_rounds=rounds)
    else:
        gibbs = _GibbsKernel(data, priors, start)
        for t in range(1, config.iterations + 1):
            gibbs.sweep(rng)
            if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
                draws[row] = gibbs.vector()
                row += 1

    run_logger.log_chain_end(model, chain, row, acceptance)
    return ChainOutput(
        draws=draws,
        parameter_names=names,
        g=data.g,
        p=data.p,
        correlated=correlated,
        seed_used=seed,
        chain=chain,
        kept_iterations=config.kept_iterations(),
        acceptance=acceptance,
        proposal_scales=final_scales,
    )


def _chain_job(job: Tuple[RegressionDataset, PriorSpec, bool, ChainConfig, int]) -> ChainOutput:
    data, priors, correlated, config, chain = job
    return run_chain(data, priors, correlated, config, chain=chain, jitter=config.jitter)


def run_chains(data: RegressionDataset, priors: PriorSpec, correlated: bool,
               config: ChainConfig, n_chains: Optional[int] = None) -> List[ChainOutput]:
    """Independent chains with seeds seed + 0 .. seed + n_chains - 1 and jittered starts

    Chains run in a process pool when ``config.workers > 1``; the result is
    always in chain order.
    """
    if n_chains is not None:
        config = replace(config, n_chains=n_chains)
    jobs = [(data, priors, correlated, config, chain) for chain in range(config.n_chains)]
    if config.workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.n_chains)) as executor:
            return list(executor.map(_chain_job, jobs))
    return [_chain_job(job) for job in jobs]
