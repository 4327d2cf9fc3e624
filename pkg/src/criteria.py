"""
Bayesian model-comparison criteria from chain output: EAIC, EBIC, DIC, CPO/LPML
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from src.errors import EmptyDrawsError, MeanStateOutOfSupportError
from src.logger import get_logger
from src.model import (
    ParameterState,
    PriorSpec,
    RegressionDataset,
    logprior,
    loglik,
    n_rho,
    pointwise_loglik,
)
from src.sampler import ChainOutput

logger = get_logger(__name__)

# Written into every criteria JSON so the numbers can be read without this code
DEFINITIONS = {
    "deviance": "D(theta) = -2 log L(theta), Gaussian 2*pi constants included",
    "dic": "2 * mean(D) - D(theta_bar), theta_bar the componentwise posterior mean",
    "p_d": "mean(D) - D(theta_bar)",
    "eaic": "mean(D) + 2 q",
    "ebic": "mean(D) + q log(n)",
    "q": "g (p + 2) free parameters, plus g (g - 1) / 2 correlations for the correlated model",
    "cpo": "harmonic mean of f(y_i | theta_m) over draws, computed in log space",
    "lpml": "sum_i log CPO_i",
}

MEAN_STATE = "posterior_mean"
MAX_POSTERIOR_DRAW = "max_posterior_draw"
MAX_LIKELIHOOD_DRAW = "max_likelihood_draw"


@dataclass(frozen=True)
class CriteriaReport:
    model: str
    eaic: float
    ebic: float
    dic: float
    lpml: float
    log_cpo: np.ndarray
    mean_deviance: float
    deviance_at_mean: float
    p_d: float
    n_params: int
    n_obs: int
    n_draws: int
    # Which state D(theta_bar) was evaluated at
    theta_bar: str = MEAN_STATE

    @property
    def cpo(self) -> np.ndarray:
        # floored at the smallest normal float so a badly fitted row stays > 0
        return np.maximum(np.exp(self.log_cpo), np.finfo(float).tiny)

    @property
    def cpo_summary(self) -> Dict[str, float]:
        if self.cpo.size == 0:
            return {}
        q1, median, q3 = np.quantile(self.cpo, [0.25, 0.5, 0.75])
        return {
            "min": float(self.cpo.min()),
            "q1": float(q1),
            "median": float(median),
            "mean": float(self.cpo.mean()),
            "q3": float(q3),
            "max": float(self.cpo.max()),
        }

    def as_dict(self) -> Dict:
        return {
            "model": self.model,
            "eaic": self.eaic,
            "ebic": self.ebic,
            "dic": self.dic,
            "lpml": self.lpml,
            "p_d": self.p_d,
            "mean_deviance": self.mean_deviance,
            "deviance_at_mean": self.deviance_at_mean,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "n_draws": self.n_draws,
            "theta_bar": self.theta_bar,
            "cpo": self.cpo.tolist(),
            "log_cpo": self.log_cpo.tolist(),
            "cpo_summary": self.cpo_summary,
            "definitions": DEFINITIONS,
        }


def deviance(data: RegressionDataset, state: ParameterState, correlated: bool) -> float:
    """-2 times the log-likelihood of the chosen error structure"""
    return -2.0 * loglik(data, state, correlated)


def n_free_params(g: int, p: int, correlated: bool) -> int:
    return g * (p + 2) + (n_rho(g) if correlated else 0)


def _reference_state(data: RegressionDataset, chain: ChainOutput, correlated: bool,
                     pointwise: np.ndarray, priors: Optional[PriorSpec], fallback: bool):
    """theta_bar for D(theta_bar): the mean state, or the best draw when it is off support"""
    mean_state = chain.mean_state()
    if mean_state.in_support():
        return mean_state, MEAN_STATE
    if not fallback:
        raise MeanStateOutOfSupportError(
            "posterior mean state is outside the support (correlation matrix not PD)"
        )
    scores = pointwise.sum(axis=1)
    definition = MAX_LIKELIHOOD_DRAW
    if priors is not None:
        scores = scores + np.array([logprior(state, priors) for state in chain.states()])
        definition = MAX_POSTERIOR_DRAW
    best = int(np.argmax(scores))
    logger.warning("Mean state out of support, using a draw instead",
                   model=chain.model, definition=definition, draw=best)
    return chain.state(best), definition


def compute_criteria(data: RegressionDataset,
                     chain: Union[ChainOutput, Sequence[ChainOutput]],
                     correlated: Optional[bool] = None,
                     priors: Optional[PriorSpec] = None,
                     fallback: bool = True) -> CriteriaReport:
    """EAIC, EBIC, DIC and CPO/LPML over every kept draw

    A sequence of chains is pooled first. ``correlated`` defaults to the
    chain's own model.
    """
    if not isinstance(chain, ChainOutput):
        chain = ChainOutput.pooled(list(chain))
    if correlated is None:
        correlated = chain.correlated
    if chain.n_draws < 1:
        raise EmptyDrawsError("criteria need at least one kept draw")

    pointwise = np.vstack([pointwise_loglik(data, state, correlated) for state in chain.states()])
    deviances = -2.0 * pointwise.sum(axis=1)
    mean_deviance = float(deviances.mean())
    reference, definition = _reference_state(data, chain, correlated, pointwise, priors, fallback)
    deviance_at_mean = deviance(data, reference, correlated)
    p_d = mean_deviance - deviance_at_mean

    q = n_free_params(data.g, data.p, correlated)
    log_cpo = np.log(chain.n_draws) - logsumexp(-pointwise, axis=0)

    report = CriteriaReport(
        model="correlated" if correlated else "uncorrelated",
        eaic=mean_deviance + 2.0 * q,
        ebic=mean_deviance + q * float(np.log(data.n)),
        dic=mean_deviance + p_d,
        lpml=float(log_cpo.sum()),
        log_cpo=log_cpo,
        mean_deviance=mean_deviance,
        deviance_at_mean=deviance_at_mean,
        p_d=p_d,
        n_params=q,
        n_obs=data.n,
        n_draws=chain.n_draws,
        theta_bar=definition,
    )
    logger.debug("Computed criteria", model=report.model, dic=round(report.dic, 4),
                 lpml=round(report.lpml, 4), p_d=round(p_d, 4))
    return report
