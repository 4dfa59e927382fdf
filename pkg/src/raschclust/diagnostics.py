"""Model comparison and fit assessment: DIC, CPO/LPML, AUC, trace data.

The conditional predictive ordinate uses the harmonic-mean Monte Carlo
estimator over stored per-subject log-likelihood draws. It is evaluated
entirely in log space (log-sum-exp of the negated per-draw values), which
keeps it finite where per-subject likelihoods underflow on the probability
scale. DIC reports both ingredients so its defining identities hold exactly.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .errors import DataError, DimensionError
from .model import RaschParams, log_likelihood, rasch_prob


@dataclass
class ComparisonReport:
    """Model-comparison numbers for one fit; dic = dev_at_mean + 2 * p_d."""

    dic: float
    p_d: float
    lpml: float
    auc: float
    dev_at_mean: float
    mean_dev: float

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")


def deviance(data, params: RaschParams) -> float:
    """-2 times the Bernoulli log-likelihood."""
    return -2.0 * log_likelihood(data, params)


def dic(output, data) -> dict:
    """Deviance information criterion from a chain.

    The plug-in parameter is the posterior mean of the expanded per-unit
    vectors, so effective-parameter counts are comparable across variants
    with different clusterings.
    """
    if output.n_keep < 2:
        raise ValueError("DIC needs at least 2 kept draws")
    dev_at_mean = deviance(
        data, RaschParams(output.theta_draws.mean(axis=0), output.b_draws.mean(axis=0))
    )
    mean_dev = float(np.mean(-2.0 * output.loglik_draws))
    p_d = mean_dev - dev_at_mean
    return {
        "dic": dev_at_mean + 2.0 * p_d,
        "p_d": p_d,
        "dev_at_mean": dev_at_mean,
        "mean_dev": mean_dev,
    }


def log_cpo(output, i: int) -> float:
    """log CPO_i via the harmonic-mean estimator in log space."""
    ll = output.per_subject_loglik_draws
    if not 0 <= i < ll.shape[1]:
        raise IndexError(f"subject index {i} out of range for N={ll.shape[1]}")
    return -(logsumexp(-ll[:, i]) - np.log(ll.shape[0]))


def cpo(output, data, i: int) -> float:
    """CPO_i on the probability scale (may underflow for long rows)."""
    return float(np.exp(log_cpo(output, i)))


def lpml(output, data=None) -> float:
    """Sum of log CPO over subjects; larger is better, always <= 0 here."""
    ll = output.per_subject_loglik_draws
    m = ll.shape[0]
    return float(-(logsumexp(-ll, axis=0) - np.log(m)).sum())


def auc(data, p_hat) -> float:
    """Rank-based (Mann-Whitney) AUC over all response cells, ties count 1/2."""
    y = np.asarray(getattr(data, "responses", data)).ravel()
    p = np.asarray(p_hat, dtype=float).ravel()
    if y.shape != p.shape:
        raise DimensionError(f"responses and p_hat differ in size: {y.shape} vs {p.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one 0 cell and one 1 cell")
    ranks = rankdata(p)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def fitted_probabilities(output) -> np.ndarray:
    """N x J matrix of response probabilities at the posterior-mean parameters."""
    theta_hat = output.theta_draws.mean(axis=0)
    b_hat = output.b_draws.mean(axis=0)
    return rasch_prob(theta_hat[:, None], b_hat[None, :])


def comparison_report(output, data) -> ComparisonReport:
    """DIC, LPML and in-sample AUC for one chain."""
    d = dic(output, data)
    return ComparisonReport(
        dic=d["dic"],
        p_d=d["p_d"],
        lpml=lpml(output),
        auc=auc(data, fitted_probabilities(output)),
        dev_at_mean=d["dev_at_mean"],
        mean_dev=d["mean_dev"],
    )


def autocorrelation(series, max_lag=50) -> dict:
    """Autocorrelation at lags 1..max_lag of a draw series.

    A zero-variance series has no defined autocorrelation; it is flagged and
    the coefficients are reported as zeros.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    max_lag = min(max_lag, n - 1)
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom <= 0.0:
        return {"zero_variance": True, "lags": list(range(1, max_lag + 1)),
                "acf": [0.0] * max_lag}
    acf = [float(centered[:-lag] @ centered[lag:]) / denom for lag in range(1, max_lag + 1)]
    return {"zero_variance": False, "lags": list(range(1, max_lag + 1)), "acf": acf}


_SCALAR_SERIES = {
    "loglik": "loglik_draws",
    "k_theta": "k_theta_draws",
    "k_b": "k_b_draws",
    "psi_theta": "psi_theta_draws",
    "lambda_theta": "lambda_theta_draws",
    "lambda_b": "lambda_b_draws",
}


def trace_series(output, which: str) -> np.ndarray:
    """Extract a named draw series; "theta:3" / "b:7" select unit columns."""
    if which in _SCALAR_SERIES:
        series = getattr(output, _SCALAR_SERIES[which])
        if series is None:
            raise KeyError(f"series {which!r} is not stored for the {output.variant} variant")
        return np.asarray(series, dtype=float)
    if ":" in which:
        name, _, idx = which.partition(":")
        arrays = {"theta": output.theta_draws, "b": output.b_draws}
        if name in arrays:
            try:
                column = int(idx)
            except ValueError:
                raise KeyError(f"bad unit index in selector {which!r}")
            if not 0 <= column < arrays[name].shape[1]:
                raise KeyError(f"unit index out of range in selector {which!r}")
            return arrays[name][:, column]
    raise KeyError(
        f"unknown trace selector {which!r}; expected one of {sorted(_SCALAR_SERIES)} "
        "or theta:<i> / b:<j>"
    )


def trace_export(output, which: str, series_path, acf_path, max_lag=50) -> dict:
    """Write a draw series and its autocorrelation (lags 1..max_lag) to CSV."""
    series = trace_series(output, which)
    ac = autocorrelation(series, max_lag)
    with open(series_path, "w") as fh:
        fh.write("draw,value\n")
        for t, v in enumerate(series):
            fh.write(f"{t},{float(v)!r}\n")
    with open(acf_path, "w") as fh:
        fh.write("lag,acf,zero_variance\n")
        for lag, a in zip(ac["lags"], ac["acf"]):
            fh.write(f"{lag},{float(a)!r},{int(ac['zero_variance'])}\n")
    return ac
