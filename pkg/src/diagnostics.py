"""
Convergence diagnostics and posterior summaries of chain output
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence, Union

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from src.errors import DegenerateChainsError, EmptyDrawsError, TooFewChainsError
from src.logger import get_logger
from src.sampler import ChainOutput

logger = get_logger(__name__)

DEFAULT_LEVEL = 0.90
# Quantile rule: linear between order statistics, h = (m - 1) q + 1
QUANTILE_METHOD = "linear"


@dataclass(frozen=True)
class PosteriorSummary:
    """One summary row: moments, equal-tailed interval, ESS and PSRF"""

    name: str
    mean: float
    sd: float
    lower: float
    upper: float
    ess: float
    psrf: float = float("nan")
    level: float = DEFAULT_LEVEL

    @property
    def excludes_zero(self) -> bool:
        return self.lower > 0.0 or self.upper < 0.0

    def as_dict(self) -> Dict[str, Union[str, float, bool]]:
        row = asdict(self)
        row["excludes_zero"] = self.excludes_zero
        return row


def _as_chain_matrix(chains) -> np.ndarray:
    try:
        matrix = np.asarray(chains, dtype=float)
    except ValueError as e:
        raise TooFewChainsError("chains must all have the same length") from e
    if matrix.ndim == 1:
        matrix = matrix[np.newaxis, :]
    if matrix.ndim != 2:
        raise TooFewChainsError("expected a (chains, draws) matrix")
    return matrix


def gelman_rubin(chains: Sequence[Sequence[float]]) -> float:
    """Classic potential scale reduction factor for one parameter

    W is the mean within-chain variance, B/m the variance of chain means and
    V = (m - 1)/m W + B/m; returns sqrt(V / W).
    """
    matrix = _as_chain_matrix(chains)
    n_chains, m = matrix.shape
    if n_chains < 2:
        raise TooFewChainsError(f"PSRF needs at least 2 chains, got {n_chains}")
    if m < 2:
        raise TooFewChainsError(f"PSRF needs at least 2 draws per chain, got {m}")
    within = matrix.var(axis=1, ddof=1).mean()
    if within <= 0:
        raise DegenerateChainsError("within-chain variance is zero")
    between = m * matrix.mean(axis=1).var(ddof=1)
    pooled = (m - 1) / m * within + between / m
    return float(np.sqrt(pooled / within))


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance at lags 0..m-1 through a zero-padded FFT"""
    x = np.asarray(x, dtype=float)
    m = x.size
    centered = x - x.mean()
    size = next_fast_len(2 * m)
    spectrum = rfft(centered, n=size)
    return irfft(spectrum * np.conjugate(spectrum), n=size)[:m] / m


def effective_sample_size(chains: Sequence[Sequence[float]]) -> float:
    """Multi-chain ESS with Geyer's initial positive and monotone sequences

    Capped at the total number of draws; constant draws count in full.
    """
    matrix = _as_chain_matrix(chains)
    n_chains, m = matrix.shape
    total = n_chains * m
    if m < 2:
        return float(total)
    acov = np.asarray([autocovariance(row) for row in matrix])
    mean_var = acov[:, 0].mean() * m / (m - 1.0)
    var_plus = mean_var * (m - 1.0) / m
    if n_chains > 1:
        var_plus += matrix.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(total)

    rho = np.zeros(m)
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[0], rho[1] = rho_even, rho_odd

    t = 1
    while t < m - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t

    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1:max_t + 2].sum()
    if not np.isfinite(tau) or tau <= 0:
        return float(total)
    return float(min(total / tau, total))


def credible_interval(draws: np.ndarray, level: float = DEFAULT_LEVEL):
    """Equal-tailed interval from empirical quantiles"""
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(draws, [tail, 1.0 - tail], method=QUANTILE_METHOD)
    return float(lower), float(upper)


def summarize(draws: Sequence[float], level: float = DEFAULT_LEVEL, name: str = "") -> PosteriorSummary:
    """Summary row for one parameter's draws (single chain, PSRF left NaN)"""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 2:
        raise EmptyDrawsError(f"need at least 2 draws to summarize, got {draws.size}")
    lower, upper = credible_interval(draws, level)
    return PosteriorSummary(
        name=name,
        mean=float(draws.mean()),
        sd=float(draws.std(ddof=1)),
        lower=lower,
        upper=upper,
        ess=effective_sample_size(draws),
        level=level,
    )


def summarize_chains(chains: Sequence[ChainOutput], level: float = DEFAULT_LEVEL) -> List[PosteriorSummary]:
    """One row per parameter over the pooled draws of equal-length chains

    PSRF is NaN for a single chain or for a parameter whose draws never move.
    """
    if not chains:
        raise EmptyDrawsError("no chains to summarize")
    names = chains[0].parameter_names
    stacked = np.stack([c.draws for c in chains])  # (chains, draws, params)
    rows = []
    for k, name in enumerate(names):
        per_chain = stacked[:, :, k]
        row = summarize(per_chain.ravel(), level=level, name=name)
        psrf = float("nan")
        if len(chains) > 1:
            try:
                psrf = gelman_rubin(per_chain)
            except DegenerateChainsError:
                logger.warning("PSRF undefined for a constant parameter", parameter=name)
        rows.append(PosteriorSummary(
            name=name,
            mean=row.mean,
            sd=row.sd,
            lower=row.lower,
            upper=row.upper,
            ess=effective_sample_size(per_chain),
            psrf=psrf,
            level=level,
        ))
    return rows


def max_psrf(summaries: Sequence[PosteriorSummary]) -> float:
    """Largest finite PSRF, NaN when none is defined"""
    values = [s.psrf for s in summaries if np.isfinite(s.psrf)]
    return float(max(values)) if values else float("nan")
