"""
Regression model on ALR responses: data, parameters, priors and log densities

    y_ij = beta_0j + sum_l beta_lj z_il + eps_ij,   i = 1..n, j = 1..g

Uncorrelated errors have covariance diag(sigma2); correlated errors have
Sigma = diag(sigma) R diag(sigma) with R built from the pairwise rho_jk.
All normalizing constants (2 pi terms) are kept so deviances are absolute.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from src.errors import (
    ConfigError,
    DimensionMismatchError,
    NonPositiveVarianceError,
    NotPositiveDefiniteError,
)

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_HALF = float(np.log(0.5))

HYPERPARAMETERS = ("a", "b2", "c", "d")
SCOPES = ("all", "intercepts", "slopes")


def n_rho(g: int) -> int:
    return g * (g - 1) // 2


def rho_pairs(g: int) -> List[Tuple[int, int]]:
    """(j, k) pairs in storage order: (1,2), (1,3), ..., (2,3), ... (1-based)"""
    rows, cols = np.triu_indices(g, k=1)
    return [(int(j) + 1, int(k) + 1) for j, k in zip(rows, cols)]


def parameter_names(g: int, p: int, correlated: bool) -> Tuple[str, ...]:
    """Column labels of a flattened state: beta row-major, then sigma2, then rho"""
    names = [f"beta_{l}_{j}" for l in range(p + 1) for j in range(1, g + 1)]
    names += [f"sigma2_{j}" for j in range(1, g + 1)]
    if correlated:
        names += [f"rho_{j}_{k}" for j, k in rho_pairs(g)]
    return tuple(names)


def correlation_matrix(rho: np.ndarray, g: int) -> np.ndarray:
    """Symmetric g x g matrix with unit diagonal and rho in the upper triangle"""
    rho = np.asarray(rho, dtype=float)
    if rho.size != n_rho(g):
        raise DimensionMismatchError(f"expected {n_rho(g)} correlations for g={g}, got {rho.size}")
    matrix = np.eye(g)
    rows, cols = np.triu_indices(g, k=1)
    matrix[rows, cols] = rho
    matrix[cols, rows] = rho
    return matrix


def correlation_cholesky(rho: np.ndarray, g: int) -> np.ndarray:
    """Lower Cholesky factor of R; raises NotPositiveDefiniteError otherwise"""
    rho = np.asarray(rho, dtype=float)
    if np.any(~(np.abs(rho) < 1.0)):
        raise NotPositiveDefiniteError(f"correlations must lie in (-1, 1), got {rho}")
    try:
        return linalg.cholesky(correlation_matrix(rho, g), lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"correlation matrix not positive definite for rho={rho}") from e


def is_positive_definite(rho: np.ndarray, g: int) -> bool:
    try:
        correlation_cholesky(rho, g)
    except NotPositiveDefiniteError:
        return False
    return True


@dataclass(frozen=True)
class RegressionDataset:
    """ALR responses y (n x g) and covariates z (n x p)

    ``strict`` enforces n > p + 1; the sampler's no-data and prior checks
    build datasets with ``strict=False``.
    """

    y: np.ndarray
    z: np.ndarray
    response_names: Optional[Tuple[str, ...]] = None
    covariate_names: Optional[Tuple[str, ...]] = None
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, np.newaxis]
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(y.shape[0], -1) if z.size else np.zeros((y.shape[0], 0))
        if y.ndim != 2 or z.ndim != 2:
            raise DimensionMismatchError("y and z must be matrices")
        if y.shape[0] != z.shape[0]:
            raise DimensionMismatchError(f"y has {y.shape[0]} rows but z has {z.shape[0]}")
        if y.shape[1] < 1:
            raise DimensionMismatchError("need at least one ALR response (g >= 1)")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise DimensionMismatchError("y and z must be finite")
        if self.strict and not y.shape[0] > z.shape[1] + 1:
            raise DimensionMismatchError(
                f"need n > p + 1 observations to identify the fit, got n={y.shape[0]}, p={z.shape[1]}"
            )
        y.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        names = self.response_names or tuple(f"alr_{j}" for j in range(1, y.shape[1] + 1))
        covariates = self.covariate_names or tuple(f"z{l}" for l in range(1, z.shape[1] + 1))
        if len(names) != y.shape[1] or len(covariates) != z.shape[1]:
            raise DimensionMismatchError("name tuples do not match the data columns")
        object.__setattr__(self, "response_names", tuple(names))
        object.__setattr__(self, "covariate_names", tuple(covariates))

    @classmethod
    def empty(cls, g: int, p: int) -> "RegressionDataset":
        return cls(y=np.zeros((0, g)), z=np.zeros((0, p)), strict=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def g(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def design(self) -> np.ndarray:
        """[1, z]: the (n, p + 1) design matrix matching beta's rows"""
        return np.column_stack([np.ones(self.n), self.z])


@dataclass(frozen=True)
class ParameterState:
    """One point in parameter space

    beta is (p + 1) x g with intercepts in row 0; rho is empty for the
    uncorrelated model. Out-of-support values are representable so the log
    prior can return -inf for them.
    """

    beta: np.ndarray
    sigma2: np.ndarray
    rho: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if beta.shape[1] != sigma2.size:
            raise DimensionMismatchError(
                f"beta has {beta.shape[1]} columns but {sigma2.size} variances were given"
            )
        if rho.size not in (0, n_rho(sigma2.size)):
            raise DimensionMismatchError(
                f"expected 0 or {n_rho(sigma2.size)} correlations, got {rho.size}"
            )
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "rho", rho)

    @property
    def g(self) -> int:
        return self.sigma2.size

    @property
    def p(self) -> int:
        return self.beta.shape[0] - 1

    @property
    def correlated(self) -> bool:
        return self.rho.size > 0

    def in_support(self) -> bool:
        if not (np.all(np.isfinite(self.beta)) and np.all(self.sigma2 > 0)):
            return False
        return self.rho.size == 0 or is_positive_definite(self.rho, self.g)

    def to_vector(self, correlated: bool) -> np.ndarray:
        parts = [self.beta.ravel(), self.sigma2]
        if correlated:
            parts.append(self.rho if self.rho.size else np.zeros(n_rho(self.g)))
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vector: Sequence[float], g: int, p: int,
                    correlated: bool) -> "ParameterState":
        vector = np.asarray(vector, dtype=float)
        k = (p + 1) * g
        expected = k + g + (n_rho(g) if correlated else 0)
        if vector.size != expected:
            raise DimensionMismatchError(f"expected {expected} values, got {vector.size}")
        rho = vector[k + g:] if correlated else np.zeros(0)
        return cls(beta=vector[:k].reshape(p + 1, g), sigma2=vector[k:k + g], rho=rho)

    def with_rho(self, rho: Sequence[float]) -> "ParameterState":
        return replace(self, rho=np.asarray(rho, dtype=float))


@dataclass(frozen=True)
class PriorSpec:
    """beta_lj ~ N(a_lj, b2_lj), sigma2_j ~ IG(c_j, d_j); rho ~ U(-1, 1) on the PD set"""

    a: np.ndarray
    b2: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b2 = np.atleast_2d(np.asarray(self.b2, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if a.shape != b2.shape or c.shape != d.shape or a.shape[1] != c.size:
            raise DimensionMismatchError("prior hyperparameter shapes disagree")
        if np.any(b2 <= 0) or np.any(c <= 0) or np.any(d <= 0):
            raise ConfigError("prior hyperparameters b2, c and d must be > 0")
        for name, value in (("a", a), ("b2", b2), ("c", c), ("d", d)):
            object.__setattr__(self, name, value)

    @property
    def g(self) -> int:
        return self.c.size

    @property
    def p(self) -> int:
        return self.a.shape[0] - 1

    @classmethod
    def from_blocks(cls, g: int, p: int, a_intercept: float = 0.0, b2_intercept: float = 1000.0,
                    a_slope: float = 0.0, b2_slope: float = 1000.0, c: float = 0.1,
                    d: float = 100.0) -> "PriorSpec":
        a = np.full((p + 1, g), float(a_slope))
        b2 = np.full((p + 1, g), float(b2_slope))
        a[0, :] = a_intercept
        b2[0, :] = b2_intercept
        return cls(a=a, b2=b2, c=np.full(g, float(c)), d=np.full(g, float(d)))

    @classmethod
    def default(cls, g: int, p: int) -> "PriorSpec":
        """N(0, 1000) coefficients and IG(0.1, 100) variances"""
        return cls.from_blocks(g, p)

    def with_substitution(self, hyperparameter: str, value: float,
                          scope: str = "all") -> "PriorSpec":
        """Copy with one hyperparameter replaced, for one-at-a-time sensitivity"""
        if hyperparameter not in HYPERPARAMETERS:
            raise ConfigError(f"unknown hyperparameter '{hyperparameter}'")
        if scope not in SCOPES:
            raise ConfigError(f"unknown scope '{scope}'")
        if hyperparameter in ("c", "d"):
            if scope != "all":
                raise ConfigError(f"'{hyperparameter}' has no intercept/slope scope")
            return replace(self, **{hyperparameter: np.full(self.g, float(value))})
        updated = np.array(getattr(self, hyperparameter), copy=True)
        rows = {"all": slice(None), "intercepts": slice(0, 1), "slopes": slice(1, None)}[scope]
        updated[rows, :] = value
        return replace(self, **{hyperparameter: updated})

    def as_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in HYPERPARAMETERS}


def _check_dimensions(data: RegressionDataset, state: ParameterState) -> None:
    if state.beta.shape != (data.p + 1, data.g):
        raise DimensionMismatchError(
            f"beta shape {state.beta.shape} does not match data (p+1, g)=({data.p + 1}, {data.g})"
        )


def residuals(data: RegressionDataset, state: ParameterState) -> np.ndarray:
    """eps_ij = y_ij - beta_0j - sum_l beta_lj z_il"""
    _check_dimensions(data, state)
    return data.y - state.beta[0] - data.z @ state.beta[1:]


def _require_positive_variances(state: ParameterState) -> None:
    if np.any(~(state.sigma2 > 0)):
        raise NonPositiveVarianceError(f"variances must be > 0, got {state.sigma2}")


def pointwise_loglik_uncorrelated(data: RegressionDataset, state: ParameterState) -> np.ndarray:
    """Per-observation log density, the product of g univariate normals"""
    _require_positive_variances(state)
    eps = residuals(data, state)
    return -0.5 * (data.g * LOG_2PI + np.log(state.sigma2).sum() + (eps ** 2 / state.sigma2).sum(axis=1))


def pointwise_loglik_correlated(data: RegressionDataset, state: ParameterState) -> np.ndarray:
    """Per-observation g-variate normal log density via the Cholesky factor of R"""
    _require_positive_variances(state)
    rho = state.rho if state.rho.size else np.zeros(n_rho(data.g))
    chol = correlation_cholesky(rho, data.g)
    sigma = np.sqrt(state.sigma2)
    standardized = residuals(data, state) / sigma
    whitened = linalg.solve_triangular(chol, standardized.T, lower=True)
    log_det = np.log(state.sigma2).sum() + 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (data.g * LOG_2PI + log_det + (whitened ** 2).sum(axis=0))


def pointwise_loglik(data: RegressionDataset, state: ParameterState, correlated: bool) -> np.ndarray:
    if correlated:
        return pointwise_loglik_correlated(data, state)
    return pointwise_loglik_uncorrelated(data, state)


def loglik_uncorrelated(data: RegressionDataset, state: ParameterState) -> float:
    """sum_j [-(n/2) log(2 pi sigma2_j) - sum_i eps_ij^2 / (2 sigma2_j)]; rho is ignored"""
    return float(pointwise_loglik_uncorrelated(data, state).sum())


def loglik_correlated(data: RegressionDataset, state: ParameterState) -> float:
    """sum_i log N_g(eps_i; 0, Sigma); empty rho is read as all zeros"""
    return float(pointwise_loglik_correlated(data, state).sum())


def loglik(data: RegressionDataset, state: ParameterState, correlated: bool) -> float:
    return loglik_correlated(data, state) if correlated else loglik_uncorrelated(data, state)


def normal_logpdf(x: np.ndarray, mean: np.ndarray, variance: np.ndarray) -> np.ndarray:
    return -0.5 * (LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)


def inverse_gamma_logpdf(x: np.ndarray, shape: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """log of d^c / Gamma(c) x^-(c+1) exp(-d/x); mean d/(c-1)"""
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x


def logprior(state: ParameterState, priors: PriorSpec) -> float:
    """Independent normal, inverse-gamma and uniform(-1, 1) terms; -inf off support"""
    if state.beta.shape != priors.a.shape or state.sigma2.shape != priors.c.shape:
        raise DimensionMismatchError("state and prior dimensions disagree")
    if not np.all(np.isfinite(state.beta)) or np.any(~(state.sigma2 > 0)):
        return -np.inf
    total = normal_logpdf(state.beta, priors.a, priors.b2).sum()
    total += inverse_gamma_logpdf(state.sigma2, priors.c, priors.d).sum()
    if state.rho.size:
        if not is_positive_definite(state.rho, state.g):
            return -np.inf
        total += LOG_HALF * state.rho.size
    return float(total)


def log_posterior_unnorm(data: RegressionDataset, state: ParameterState, priors: PriorSpec,
                         correlated: bool) -> float:
    """log likelihood + log prior; -inf propagates without evaluating the likelihood"""
    _check_dimensions(data, state)
    if correlated and state.rho.size != n_rho(data.g):
        raise DimensionMismatchError(f"correlated model needs {n_rho(data.g)} correlations")
    if not correlated and state.rho.size:
        state = replace(state, rho=np.zeros(0))
    prior = logprior(state, priors)
    if not np.isfinite(prior):
        return -np.inf
    return loglik(data, state, correlated) + prior


def fitted_compositions(data: RegressionDataset, beta: np.ndarray) -> np.ndarray:
    """Mean composition per row, alr_inverse(x_i beta), shape (n, g + 1)"""
    from src.simplex import alr_inverse_matrix

    return alr_inverse_matrix(data.design() @ np.asarray(beta, dtype=float))
