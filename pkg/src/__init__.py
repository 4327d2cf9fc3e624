"""
ALR Bayes - Bayesian compositional regression with additive log-ratio responses

Fits multivariate regressions to ALR-transformed compositions with either
uncorrelated errors (exact Gibbs sampler) or correlated errors
(adaptive Metropolis-within-Gibbs), checks convergence, compares models with
EAIC/EBIC/DIC/LPML and runs coverage simulation studies.
"""

__version__ = "1.0.0"
__author__ = "ALR Bayes Team"
