"""Clustering and estimation accuracy metrics for the replicate studies.

Clustering agreement is scored over unordered pairs of units: a pair is a
true positive when both partitions place it in one cluster, a true negative
when both split it, and so on. Precision, recall and the Rand index are the
usual ratios of those counts.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricUndefinedError


@dataclass
class ReplicateMetrics:
    """Per-replicate scores for one fitted variant.

    Clustering fields are None for variants without a clustering structure;
    precision/recall are None when their denominator is zero.
    """

    mab: dict = field(default_factory=dict)
    msd: dict = field(default_factory=dict)
    mmse: dict = field(default_factory=dict)
    ri: dict = field(default_factory=dict)
    precision: dict = field(default_factory=dict)
    recall: dict = field(default_factory=dict)
    k_hat: dict = field(default_factory=dict)
    p_d: float = None
    auc: float = None
    time_seconds: float = None


def _check_pair(truth, estimate):
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape or truth.ndim != 1:
        raise ValueError(f"label vectors must match: {truth.shape} vs {estimate.shape}")
    if len(truth) < 2:
        raise ValueError("need at least 2 units to count pairs")
    return truth, estimate


def pair_confusion(truth, estimate) -> dict:
    """Counts of the n(n-1)/2 unit pairs: tp / fp / fn / tn.

    tp: together in both; fp: together in estimate only; fn: together in
    truth only; tn: apart in both.
    """
    truth, estimate = _check_pair(truth, estimate)
    iu, ju = np.triu_indices(len(truth), k=1)
    same_t = truth[iu] == truth[ju]
    same_e = estimate[iu] == estimate[ju]
    return {
        "tp": int(np.sum(same_t & same_e)),
        "fp": int(np.sum(~same_t & same_e)),
        "fn": int(np.sum(same_t & ~same_e)),
        "tn": int(np.sum(~same_t & ~same_e)),
    }


def rand_index(truth, estimate) -> float:
    """(tp + tn) / all pairs: the proportion of pairs on which both agree."""
    c = pair_confusion(truth, estimate)
    return (c["tp"] + c["tn"]) / (c["tp"] + c["fp"] + c["fn"] + c["tn"])


def precision(truth, estimate) -> float:
    """tp / (tp + fp); undefined when the estimate pairs nothing together."""
    c = pair_confusion(truth, estimate)
    if c["tp"] + c["fp"] == 0:
        raise MetricUndefinedError("precision undefined: estimate has no co-clustered pair")
    return c["tp"] / (c["tp"] + c["fp"])


def recall(truth, estimate) -> float:
    """tp / (tp + fn); undefined when the truth pairs nothing together."""
    c = pair_confusion(truth, estimate)
    if c["tp"] + c["fn"] == 0:
        raise MetricUndefinedError("recall undefined: truth has no co-clustered pair")
    return c["tp"] / (c["tp"] + c["fn"])


def _check_estimates(estimates, truth):
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.ndim != 2 or truth.ndim != 1 or estimates.shape[1] != truth.shape[0]:
        raise ValueError(
            f"estimates must be (replicates, units) matching truth: "
            f"{estimates.shape} vs {truth.shape}"
        )
    return estimates, truth


def mab(estimates, truth) -> float:
    """Mean absolute bias over replicates and units."""
    estimates, truth = _check_estimates(estimates, truth)
    return float(np.mean(np.abs(estimates - truth[None, :])))


def mmse(estimates, truth) -> float:
    """Mean squared error over replicates and units."""
    estimates, truth = _check_estimates(estimates, truth)
    return float(np.mean((estimates - truth[None, :]) ** 2))


def msd(estimates, truth=None) -> float:
    """Root mean squared deviation of each estimate around its across-replicate mean.

    ``truth`` is accepted for signature symmetry but does not enter the value.
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.ndim != 2 or estimates.shape[0] < 2:
        raise ValueError("msd needs a (replicates >= 2, units) estimate matrix")
    centered = estimates - estimates.mean(axis=0, keepdims=True)
    return float(np.sqrt(np.mean(centered**2)))
