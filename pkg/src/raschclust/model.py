"""Rasch response function and Bernoulli log-likelihood kernels.

Everything here is a pure function of (responses, abilities, difficulties).
The samplers and the model-comparison diagnostics are all built on these
kernels, so they are written in numerically stable form: probabilities are
never materialized when a log-scale quantity is what is actually needed.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionError


@dataclass(frozen=True)
class RaschParams:
    """Expanded per-unit parameters: one ability per subject, one difficulty per item."""

    theta: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.b))):
            raise ValueError("RaschParams entries must be finite")


def _responses(data) -> np.ndarray:
    """Accept a ResponseMatrix or a raw 2-D 0/1 array."""
    y = getattr(data, "responses", data)
    return np.asarray(y, dtype=float)


def rasch_prob(theta, b):
    """P(correct) = logistic(theta - b), stable for |theta - b| up to ~700.

    Accepts scalars or arrays (broadcast applies).
    """
    return expit(np.asarray(theta, dtype=float) - np.asarray(b, dtype=float))


def log_logistic_pair(x):
    """Return (log sigma(x), log(1 - sigma(x))) without overflow.

    log sigma(x) = -log(1 + e^(-x)) and log(1 - sigma(x)) = -log(1 + e^x);
    both are evaluated via logaddexp so large |x| never produces inf.
    """
    x = np.asarray(x, dtype=float)
    return -np.logaddexp(0.0, -x), -np.logaddexp(0.0, x)


def loglik_matrix(data, theta, b):
    """Per-cell Bernoulli log-likelihood, shape (N, J)."""
    y = _responses(data)
    theta = np.asarray(theta, dtype=float)
    b = np.asarray(b, dtype=float)
    if y.shape != (theta.shape[0], b.shape[0]):
        raise DimensionError(
            f"responses are {y.shape}, expected ({theta.shape[0]}, {b.shape[0]})"
        )
    logp, log1mp = log_logistic_pair(theta[:, None] - b[None, :])
    return y * logp + (1.0 - y) * log1mp


def log_likelihood(data, params: RaschParams) -> float:
    """Total Bernoulli log-likelihood of the response matrix."""
    return float(loglik_matrix(data, params.theta, params.b).sum())


def per_subject_log_likelihood(data, params: RaschParams) -> np.ndarray:
    """Length-N vector of per-row log-likelihoods (the CPO ingredient)."""
    return loglik_matrix(data, params.theta, params.b).sum(axis=1)


def subject_likelihood(data, i: int, params: RaschParams):
    """Likelihood of subject i's response row, with its log-scale companion.

    Returns
    -------
    (likelihood, log_likelihood) : (float, float)
        The probability-scale value underflows for long rows; the log value
        does not, which is why both are returned.
    """
    y = _responses(data)
    if not 0 <= i < y.shape[0]:
        raise IndexError(f"subject index {i} out of range for N={y.shape[0]}")
    ll = float(loglik_matrix(data, params.theta, params.b)[i].sum())
    return float(np.exp(ll)), ll
