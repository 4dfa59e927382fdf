"""Metropolis-within-Gibbs samplers for three Rasch-model variants.

* ``mfm``   — both the ability block (subjects) and the difficulty block
  (items) carry a mixture prior with a random number of components K,
  K - 1 ~ Poisson(lambda), weights ~ Dirichlet(gamma, ..., gamma).
* ``dp``    — truncated stick-breaking Dirichlet-process prior on both
  blocks with fixed concentration alpha; the component count is the
  truncation level and only the occupied count is reported.
* ``plain`` — one ability per subject and one difficulty per item, normal
  priors, no clustering.

Each sweep updates, in order: cluster-level values (ability block then
difficulty block), allocations, weights and K per block, the Poisson rates
(difficulty block then ability block), and finally the ability-block
precision. Non-conjugate value updates use random-walk Metropolis whose
proposal s.d. adapts toward a 0.44 acceptance rate during burn-in and is
frozen afterwards, which keeps the retained draws a valid Markov chain.

The (K, weights) move is an exact conditional draw: given the partition
induced by the allocations, K is sampled over {K_occ, K_occ + 1, ...} with
log-weight

    log p(K) + log K!/(K - K_occ)! + log Gamma(K*gamma) - log Gamma(K*gamma + n),

then weights come from Dirichlet(gamma + counts, gamma, ..., gamma) with
the empty components last and their values refreshed from the base measure.
Disabling the likelihood (``prior_only``) turns every sweep into a draw
from the prior, which is the validity check the test suite runs.
"""

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .errors import ChainDivergedError, ConfigError, DimensionError
from .model import log_logistic_pair
from .priors import BaseMeasure, HyperpriorSpec, MfmConfig, stick_weights

ACCEPT_TARGET = 0.44
K_CONDITIONAL_EXTRA = 100
LAMBDA_PROPOSAL_SD = 0.5

_VARIANTS = ("mfm", "dp", "plain")


@dataclass(frozen=True)
class ChainConfig:
    """Settings for one MCMC run; defaults follow the reference analysis."""

    variant: str = "mfm"
    n_burnin: int = 20000
    n_keep: int = 10000
    thin: int = 2
    seed: int = 0
    gamma: float = 1.0
    lambda_theta_prior: str = "log_normal(0,1)"
    lambda_b_prior: str = "log_normal(0,1)"
    psi_b: float = 100.0
    psi_theta_prior: str = "gamma(100,1)"
    proposal_sd_init: float = 0.5
    adapt: bool = True
    center: bool = False
    prior_only: bool = False
    # dp variant
    alpha: float = 1.0
    truncation: int = 50
    # plain variant
    plain_b_sd: float = 1.0
    plain_psi_prior: str = "gamma(0.001,0.001)"

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {_VARIANTS}")
        if self.n_burnin < 0 or self.n_keep < 1 or self.thin < 1:
            raise ConfigError("need n_burnin >= 0, n_keep >= 1, thin >= 1")
        if self.proposal_sd_init <= 0 or self.psi_b <= 0 or self.gamma <= 0:
            raise ConfigError("proposal_sd_init, psi_b and gamma must be positive")
        if self.alpha <= 0 or self.truncation < 2:
            raise ConfigError("dp variant needs alpha > 0 and truncation >= 2")
        # fail early on malformed prior specs
        for spec in (self.lambda_theta_prior, self.lambda_b_prior,
                     self.psi_theta_prior, self.plain_psi_prior):
            HyperpriorSpec.parse(spec)
        for name in ("psi_theta_prior", "plain_psi_prior"):
            if HyperpriorSpec.parse(getattr(self, name)).family != "gamma":
                raise ConfigError(f"{name} must be a gamma(a,b) spec")


@dataclass
class PartitionState:
    """One block's clustering state: k components (occupied first after a
    weights-and-K move), a weight simplex, 0-based labels, one value per
    component, and the block's Poisson rate."""

    k: int
    weights: np.ndarray
    labels: np.ndarray
    values: np.ndarray
    lam: float = 1.0

    def expanded(self) -> np.ndarray:
        return self.values[self.labels]

    def occupied_mask(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k) > 0


@dataclass
class ChainOutput:
    """Post-burn-in draws (every thin-th sweep), expanded to per-unit vectors."""

    variant: str
    theta_draws: np.ndarray
    b_draws: np.ndarray
    z_draws: np.ndarray
    g_draws: np.ndarray
    k_theta_draws: np.ndarray
    k_b_draws: np.ndarray
    psi_theta_draws: np.ndarray
    loglik_draws: np.ndarray
    per_subject_loglik_draws: np.ndarray
    lambda_theta_draws: np.ndarray = None
    lambda_b_draws: np.ndarray = None
    accept_rate_theta: float = float("nan")
    accept_rate_b: float = float("nan")
    proposal_sd_theta: float = float("nan")
    proposal_sd_b: float = float("nan")
    wall_time_seconds: float = 0.0
    config: ChainConfig = None

    @property
    def n_keep(self) -> int:
        return self.theta_draws.shape[0]

    @property
    def n_subjects(self) -> int:
        return self.theta_draws.shape[1]

    @property
    def n_items(self) -> int:
        return self.b_draws.shape[1]


def _shifted_poisson_logpmf(k, lam):
    if np.isscalar(k) or getattr(k, "ndim", 1) == 0:
        return -lam + (k - 1.0) * math.log(lam) - math.lgamma(k)
    k = np.asarray(k, dtype=float)
    return -lam + (k - 1.0) * math.log(lam) - gammaln(k)


def _normalize_log_rows(logits):
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    np.exp(shifted, out=shifted)
    total = shifted.sum(axis=1, keepdims=True)
    return shifted / total


def _cell_log_probs(values, other_exp, flip):
    """(log p, log(1-p)) for success prob sigma(value - other), or
    sigma(other - value) when ``flip`` marks the difficulty block."""
    logp, log1mp = log_logistic_pair(values[:, None] - other_exp[None, :])
    if flip:
        return log1mp, logp
    return logp, log1mp


def _allocation_logits(y, weights, values, other_exp, prior_only=False, flip=False):
    logw = np.log(np.maximum(weights, 1e-300))
    if prior_only:
        return np.broadcast_to(logw, (y.shape[0], len(weights))).copy()
    logp, log1mp = _cell_log_probs(values, other_exp, flip)
    return y @ (logp - log1mp).T + log1mp.sum(axis=1)[None, :] + logw[None, :]


def allocation_log_probs(y, weights, values, other_exp, prior_only=False, flip=False):
    """Normalized log conditional P(label = k) for every unit, shape (n, k).

    P(label_i = k) is proportional to weights[k] times the Bernoulli
    likelihood of unit i's row evaluated at values[k] against the expanded
    other-block values; ``flip`` marks the difficulty block, whose success
    probability decreases in its own value.
    """
    return np.log(_normalize_log_rows(
        _allocation_logits(y, weights, values, other_exp, prior_only, flip)))


def _sample_prob_rows(probs, rng):
    cum = np.cumsum(probs, axis=1)
    cum /= cum[:, -1:]
    u = rng.random(probs.shape[0])
    return np.minimum((u[:, None] > cum).sum(axis=1), probs.shape[1] - 1)


def update_allocations(state, y, other_exp, rng, prior_only=False,
                       flip=False) -> PartitionState:
    """Resample every allocation label from its full conditional."""
    probs = _normalize_log_rows(
        _allocation_logits(y, state.weights, state.values, other_exp, prior_only, flip))
    return replace(state, labels=_sample_prob_rows(probs, rng))


def cluster_response_sums(y, labels, k):
    """Per-cluster member counts and per-column response sums ((k,), (k, m))."""
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, y.shape[1]))
    np.add.at(sums, labels, y)
    return counts, sums


def _cluster_loglik(values, counts, sums, other_exp, flip=False):
    logp, log1mp = _cell_log_probs(values, other_exp, flip)
    return (sums * logp).sum(axis=1) + ((counts[:, None] - sums) * log1mp).sum(axis=1)


def update_values(state, y, other_exp, base, rng, proposal_sd, prior_only=False,
                  flip=False):
    """Random-walk Metropolis on occupied cluster values; empty components
    are refreshed with exact base-measure draws.

    Returns (new_state, n_accepted, n_occupied).
    """
    occupied = state.occupied_mask()
    eps = rng.standard_normal(state.k)
    u = rng.random(state.k)
    prop = state.values + proposal_sd * eps
    if prior_only:
        cur_ll = prop_ll = np.zeros(state.k)
    else:
        counts, sums = cluster_response_sums(y, state.labels, state.k)
        cur_ll = _cluster_loglik(state.values, counts, sums, other_exp, flip)
        prop_ll = _cluster_loglik(prop, counts, sums, other_exp, flip)
    log_ratio = (prop_ll + base.log_density(prop)) - (cur_ll + base.log_density(state.values))
    accept = occupied & (np.log(u) < log_ratio)
    values = np.where(accept, prop, state.values)
    n_empty = int((~occupied).sum())
    if n_empty:
        values[~occupied] = base.sample(rng, size=n_empty)
    return replace(state, values=values), int(accept.sum()), int(occupied.sum())


def canonicalize_partition(labels, values):
    """Relabel occupied clusters 0..K_occ-1 in first-appearance order.

    Returns (labels, occupied_values, counts); empty components are dropped.
    """
    uniq, first = np.unique(labels, return_index=True)
    order = uniq[np.argsort(first)]
    remap = np.empty(int(labels.max()) + 1, dtype=int)
    remap[order] = np.arange(len(order))
    new_labels = remap[labels]
    return new_labels, values[order], np.bincount(new_labels)


def telescoping_log_weights(cfg: MfmConfig, k_occ, n, k_extra=K_CONDITIONAL_EXTRA):
    """Unnormalized log P(K = k | partition) on k = k_occ .. k_occ + k_extra.

    Terms constant in K (the occupied-cluster Gamma factors) are dropped.
    """
    ks = np.arange(k_occ, k_occ + k_extra + 1, dtype=float)
    return (
        _shifted_poisson_logpmf(ks, cfg.lam)
        + gammaln(ks + 1.0)
        - gammaln(ks - k_occ + 1.0)
        + gammaln(cfg.gamma * ks)
        - gammaln(cfg.gamma * ks + n)
    )


def update_weights_and_k(state, cfg: MfmConfig, base, rng,
                         k_extra=K_CONDITIONAL_EXTRA) -> PartitionState:
    """Exact conditional draw of (K, weights) given the current partition."""
    labels, occ_values, counts = canonicalize_partition(state.labels, state.values)
    k_occ = len(counts)
    logw = telescoping_log_weights(cfg, k_occ, len(labels), k_extra)
    probs = np.exp(logw - logw.max())
    cum = np.cumsum(probs)
    k = k_occ + int(np.searchsorted(cum / cum[-1], rng.random(), side="right"))
    k = min(k, k_occ + k_extra)
    concentration = np.concatenate([counts + cfg.gamma, np.full(k - k_occ, cfg.gamma)])
    weights = rng.dirichlet(concentration)
    values = np.concatenate([occ_values, base.sample(rng, size=k - k_occ)]) \
        if k > k_occ else occ_values
    return replace(state, k=k, weights=weights, labels=labels, values=values)


def update_lambda(k, lam, prior: HyperpriorSpec, rng,
                  proposal_sd=LAMBDA_PROPOSAL_SD) -> float:
    """One random-walk MH step on log(lambda) targeting p(lambda) p(K | lambda)."""
    prop = lam * math.exp(proposal_sd * rng.standard_normal())
    log_num = prior.log_density(prop) + float(_shifted_poisson_logpmf(k, prop)) + math.log(prop)
    log_den = prior.log_density(lam) + float(_shifted_poisson_logpmf(k, lam)) + math.log(lam)
    if math.log(rng.random()) < log_num - log_den:
        return prop
    return lam


def update_psi(values, prior_a, prior_b, rng) -> float:
    """Conjugate Gibbs draw for a normal precision on cluster-level values:
    Gamma(a + K_occ/2, b + sum(values^2)/2)."""
    values = np.asarray(values, dtype=float)
    shape = prior_a + 0.5 * len(values)
    rate = prior_b + 0.5 * float(values @ values)
    return float(rng.gamma(shape, 1.0 / rate))


def update_dp_sticks(labels, truncation, alpha, rng) -> np.ndarray:
    """Conditional stick update: nu_h ~ Beta(1 + n_h, alpha + n_{>h})."""
    counts = np.bincount(labels, minlength=truncation)
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0]])
    sticks = rng.beta(1.0 + counts[:-1], alpha + tail[:-1])
    return stick_weights(sticks)


def _init_mfm_partition(n_units, gamma, lam, base, rng) -> PartitionState:
    k = 1 + int(rng.poisson(lam))
    weights = rng.dirichlet(np.full(k, gamma))
    labels = _sample_prob_rows(np.broadcast_to(weights, (n_units, k)), rng)
    return PartitionState(k, weights, labels, base.sample(rng, size=k), lam)


def _init_dp_partition(n_units, truncation, alpha, base, rng) -> PartitionState:
    sticks = rng.beta(1.0, alpha, size=truncation - 1)
    weights = stick_weights(sticks)
    labels = _sample_prob_rows(np.broadcast_to(weights, (n_units, truncation)), rng)
    return PartitionState(truncation, weights, labels, base.sample(rng, size=truncation))


class _Storage:
    def __init__(self, cfg, n, m):
        self.center = cfg.center
        keep = cfg.n_keep
        self.theta = np.empty((keep, n))
        self.b = np.empty((keep, m))
        self.z = np.empty((keep, n), dtype=np.int32)
        self.g = np.empty((keep, m), dtype=np.int32)
        self.k_theta = np.empty(keep, dtype=np.int32)
        self.k_b = np.empty(keep, dtype=np.int32)
        self.psi_theta = np.empty(keep)
        self.loglik = np.empty(keep)
        self.row_loglik = np.empty((keep, n))
        self.lam_theta = np.empty(keep)
        self.lam_b = np.empty(keep)
        self.t = 0

    def store(self, y, theta_exp, b_exp, z, g, psi_theta, lam_theta, lam_b, prior_only):
        t = self.t
        if self.center:
            grand = (theta_exp.sum() + b_exp.sum()) / (len(theta_exp) + len(b_exp))
            theta_exp = theta_exp - grand
            b_exp = b_exp - grand
        if prior_only:
            rows = np.zeros(y.shape[0])
        else:
            logp, log1mp = log_logistic_pair(theta_exp[:, None] - b_exp[None, :])
            rows = (y * logp + (1.0 - y) * log1mp).sum(axis=1)
        total = float(rows.sum())
        if not math.isfinite(total):
            raise ChainDivergedError(f"log-likelihood became non-finite at kept draw {t}")
        self.theta[t] = theta_exp
        self.b[t] = b_exp
        self.z[t] = z
        self.g[t] = g
        self.k_theta[t] = len(np.unique(z))
        self.k_b[t] = len(np.unique(g))
        self.psi_theta[t] = psi_theta
        self.loglik[t] = total
        self.row_loglik[t] = rows
        self.lam_theta[t] = lam_theta
        self.lam_b[t] = lam_b
        self.t += 1


def run_chain(data, cfg: ChainConfig) -> ChainOutput:
    """Run the configured variant on a response matrix; bit-reproducible per seed."""
    y = np.asarray(getattr(data, "responses", data), dtype=float)
    if y.ndim != 2:
        raise DimensionError("responses must be a 2-D matrix")
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    if cfg.variant == "mfm":
        out = _run_mfm(y, cfg, rng)
    elif cfg.variant == "dp":
        out = _run_dp(y, cfg, rng)
    else:
        out = _run_plain(y, cfg, rng)
    out.wall_time_seconds = time.perf_counter() - started
    return out


def run_dp_chain(data, cfg: ChainConfig) -> ChainOutput:
    """Convenience wrapper forcing the dp variant."""
    return run_chain(data, replace(cfg, variant="dp"))


def _adapt_sd(sd, accepted, occupied, sweep):
    rate = (sweep + 1.0) ** -0.6
    frac = accepted / occupied if occupied else ACCEPT_TARGET
    return float(np.clip(sd * math.exp(rate * (frac - ACCEPT_TARGET)), 1e-3, 1e3))


def _run_mfm(y, cfg, rng) -> ChainOutput:
    n, m = y.shape
    yT = np.ascontiguousarray(y.T)
    lam_theta_prior = HyperpriorSpec.parse(cfg.lambda_theta_prior)
    lam_b_prior = HyperpriorSpec.parse(cfg.lambda_b_prior)
    psi_prior = HyperpriorSpec.parse(cfg.psi_theta_prior)
    a_psi, b_psi = psi_prior.params
    base_b = BaseMeasure(precision=cfg.psi_b)

    psi_theta = psi_prior.sample(rng)
    st_t = _init_mfm_partition(n, cfg.gamma, lam_theta_prior.sample(rng),
                               BaseMeasure(precision=psi_theta), rng)
    st_b = _init_mfm_partition(m, cfg.gamma, lam_b_prior.sample(rng), base_b, rng)
    sd_t = sd_b = cfg.proposal_sd_init

    store = _Storage(cfg, n, m)
    total = cfg.n_burnin + cfg.n_keep * cfg.thin
    kept_acc_t = kept_acc_b = kept_occ_t = kept_occ_b = 0
    for sweep in range(total):
        base_t = BaseMeasure(precision=psi_theta)
        st_t, acc_t, occ_t = update_values(st_t, y, st_b.expanded(), base_t, rng, sd_t,
                                           cfg.prior_only)
        st_b, acc_b, occ_b = update_values(st_b, yT, st_t.expanded(), base_b, rng, sd_b,
                                           cfg.prior_only, flip=True)
        if sweep < cfg.n_burnin:
            if cfg.adapt:
                sd_t = _adapt_sd(sd_t, acc_t, occ_t, sweep)
                sd_b = _adapt_sd(sd_b, acc_b, occ_b, sweep)
        else:
            kept_acc_t += acc_t
            kept_occ_t += occ_t
            kept_acc_b += acc_b
            kept_occ_b += occ_b
        st_t = update_allocations(st_t, y, st_b.expanded(), rng, cfg.prior_only)
        st_b = update_allocations(st_b, yT, st_t.expanded(), rng, cfg.prior_only,
                                  flip=True)
        st_t = update_weights_and_k(st_t, MfmConfig(cfg.gamma, st_t.lam), base_t, rng)
        st_b = update_weights_and_k(st_b, MfmConfig(cfg.gamma, st_b.lam), base_b, rng)
        st_b.lam = update_lambda(st_b.k, st_b.lam, lam_b_prior, rng)
        st_t.lam = update_lambda(st_t.k, st_t.lam, lam_theta_prior, rng)
        psi_theta = update_psi(st_t.values[st_t.occupied_mask()], a_psi, b_psi, rng)
        if sweep >= cfg.n_burnin and (sweep - cfg.n_burnin) % cfg.thin == cfg.thin - 1:
            store.store(y, st_t.expanded(), st_b.expanded(), st_t.labels, st_b.labels,
                        psi_theta, st_t.lam, st_b.lam, cfg.prior_only)
    return ChainOutput(
        variant="mfm",
        theta_draws=store.theta, b_draws=store.b,
        z_draws=store.z, g_draws=store.g,
        k_theta_draws=store.k_theta, k_b_draws=store.k_b,
        psi_theta_draws=store.psi_theta,
        loglik_draws=store.loglik, per_subject_loglik_draws=store.row_loglik,
        lambda_theta_draws=store.lam_theta, lambda_b_draws=store.lam_b,
        accept_rate_theta=kept_acc_t / max(kept_occ_t, 1),
        accept_rate_b=kept_acc_b / max(kept_occ_b, 1),
        proposal_sd_theta=sd_t, proposal_sd_b=sd_b,
        config=cfg,
    )


def _run_dp(y, cfg, rng) -> ChainOutput:
    n, m = y.shape
    yT = np.ascontiguousarray(y.T)
    psi_prior = HyperpriorSpec.parse(cfg.psi_theta_prior)
    a_psi, b_psi = psi_prior.params
    base_b = BaseMeasure(precision=cfg.psi_b)

    psi_theta = psi_prior.sample(rng)
    st_t = _init_dp_partition(n, cfg.truncation, cfg.alpha,
                              BaseMeasure(precision=psi_theta), rng)
    st_b = _init_dp_partition(m, cfg.truncation, cfg.alpha, base_b, rng)
    sd_t = sd_b = cfg.proposal_sd_init

    store = _Storage(cfg, n, m)
    total = cfg.n_burnin + cfg.n_keep * cfg.thin
    kept_acc_t = kept_acc_b = kept_occ_t = kept_occ_b = 0
    for sweep in range(total):
        base_t = BaseMeasure(precision=psi_theta)
        st_t, acc_t, occ_t = update_values(st_t, y, st_b.expanded(), base_t, rng, sd_t,
                                           cfg.prior_only)
        st_b, acc_b, occ_b = update_values(st_b, yT, st_t.expanded(), base_b, rng, sd_b,
                                           cfg.prior_only, flip=True)
        if sweep < cfg.n_burnin:
            if cfg.adapt:
                sd_t = _adapt_sd(sd_t, acc_t, occ_t, sweep)
                sd_b = _adapt_sd(sd_b, acc_b, occ_b, sweep)
        else:
            kept_acc_t += acc_t
            kept_occ_t += occ_t
            kept_acc_b += acc_b
            kept_occ_b += occ_b
        st_t = update_allocations(st_t, y, st_b.expanded(), rng, cfg.prior_only)
        st_b = update_allocations(st_b, yT, st_t.expanded(), rng, cfg.prior_only,
                                  flip=True)
        st_t.weights = update_dp_sticks(st_t.labels, cfg.truncation, cfg.alpha, rng)
        st_b.weights = update_dp_sticks(st_b.labels, cfg.truncation, cfg.alpha, rng)
        psi_theta = update_psi(st_t.values[st_t.occupied_mask()], a_psi, b_psi, rng)
        if sweep >= cfg.n_burnin and (sweep - cfg.n_burnin) % cfg.thin == cfg.thin - 1:
            store.store(y, st_t.expanded(), st_b.expanded(), st_t.labels, st_b.labels,
                        psi_theta, math.nan, math.nan, cfg.prior_only)
    return ChainOutput(
        variant="dp",
        theta_draws=store.theta, b_draws=store.b,
        z_draws=store.z, g_draws=store.g,
        k_theta_draws=store.k_theta, k_b_draws=store.k_b,
        psi_theta_draws=store.psi_theta,
        loglik_draws=store.loglik, per_subject_loglik_draws=store.row_loglik,
        accept_rate_theta=kept_acc_t / max(kept_occ_t, 1),
        accept_rate_b=kept_acc_b / max(kept_occ_b, 1),
        proposal_sd_theta=sd_t, proposal_sd_b=sd_b,
        config=cfg,
    )


def _row_loglik(y, theta, b):
    logp, log1mp = log_logistic_pair(theta[:, None] - b[None, :])
    return (y * logp + (1.0 - y) * log1mp).sum(axis=1)


def _run_plain(y, cfg, rng) -> ChainOutput:
    n, m = y.shape
    yT = np.ascontiguousarray(y.T)
    a0, b0 = HyperpriorSpec.parse(cfg.plain_psi_prior).params
    b_var = cfg.plain_b_sd**2

    theta = np.zeros(n)
    b = np.zeros(m)
    psi = 1.0
    sd_t = np.full(n, cfg.proposal_sd_init)
    sd_b = np.full(m, cfg.proposal_sd_init)

    store = _Storage(cfg, n, m)
    identity_z = np.arange(n, dtype=np.int32)
    identity_g = np.arange(m, dtype=np.int32)
    total = cfg.n_burnin + cfg.n_keep * cfg.thin
    kept_acc_t = kept_acc_b = kept_n = 0
    for sweep in range(total):
        adapting = cfg.adapt and sweep < cfg.n_burnin
        rate = (sweep + 1.0) ** -0.6

        prop = theta + sd_t * rng.standard_normal(n)
        if cfg.prior_only:
            delta = np.zeros(n)
        else:
            delta = _row_loglik(y, prop, b) - _row_loglik(y, theta, b)
        delta += 0.5 * psi * (theta**2 - prop**2)
        acc = np.log(rng.random(n)) < delta
        theta = np.where(acc, prop, theta)
        if adapting:
            sd_t = np.clip(sd_t * np.exp(rate * (acc - ACCEPT_TARGET)), 1e-3, 1e3)

        prop_b = b + sd_b * rng.standard_normal(m)
        if cfg.prior_only:
            delta_b = np.zeros(m)
        else:
            delta_b = _row_loglik(yT, -prop_b, -theta) - _row_loglik(yT, -b, -theta)
        delta_b += 0.5 * (b**2 - prop_b**2) / b_var
        acc_b = np.log(rng.random(m)) < delta_b
        b = np.where(acc_b, prop_b, b)
        if adapting:
            sd_b = np.clip(sd_b * np.exp(rate * (acc_b - ACCEPT_TARGET)), 1e-3, 1e3)

        psi = update_psi(theta, a0, b0, rng)

        if sweep >= cfg.n_burnin:
            kept_acc_t += int(acc.sum())
            kept_acc_b += int(acc_b.sum())
            kept_n += 1
            if (sweep - cfg.n_burnin) % cfg.thin == cfg.thin - 1:
                store.store(y, theta, b, identity_z, identity_g, psi,
                            math.nan, math.nan, cfg.prior_only)
    return ChainOutput(
        variant="plain",
        theta_draws=store.theta, b_draws=store.b,
        z_draws=store.z, g_draws=store.g,
        k_theta_draws=store.k_theta, k_b_draws=store.k_b,
        psi_theta_draws=store.psi_theta,
        loglik_draws=store.loglik, per_subject_loglik_draws=store.row_loglik,
        accept_rate_theta=kept_acc_t / max(kept_n * n, 1),
        accept_rate_b=kept_acc_b / max(kept_n * m, 1),
        proposal_sd_theta=float(np.median(sd_t)), proposal_sd_b=float(np.median(sd_b)),
        config=cfg,
    )


def mfm_log_joint(data, st_theta: PartitionState, st_b: PartitionState,
                  psi_theta: float, cfg: ChainConfig) -> float:
    """Log joint density of the full mixture-variant state (all components,
    occupied and empty) times the likelihood. Used by the invariance tests."""
    y = np.asarray(getattr(data, "responses", data), dtype=float)
    lam_theta_prior = HyperpriorSpec.parse(cfg.lambda_theta_prior)
    lam_b_prior = HyperpriorSpec.parse(cfg.lambda_b_prior)
    psi_prior = HyperpriorSpec.parse(cfg.psi_theta_prior)

    def block(state, base):
        logw = np.log(np.maximum(state.weights, 1e-300))
        dirichlet = (
            gammaln(cfg.gamma * state.k)
            - state.k * gammaln(cfg.gamma)
            + (cfg.gamma - 1.0) * logw.sum()
        )
        return (
            float(_shifted_poisson_logpmf(state.k, state.lam))
            + dirichlet
            + float(logw[state.labels].sum())
            + float(base.log_density(state.values).sum())
        )

    total = block(st_theta, BaseMeasure(precision=psi_theta))
    total += block(st_b, BaseMeasure(precision=cfg.psi_b))
    total += lam_theta_prior.log_density(st_theta.lam)
    total += lam_b_prior.log_density(st_b.lam)
    total += psi_prior.log_density(psi_theta)
    logp, log1mp = log_logistic_pair(
        st_theta.expanded()[:, None] - st_b.expanded()[None, :]
    )
    total += float((y * logp + (1.0 - y) * log1mp).sum())
    return total


_CSV_FILES = {
    "theta": ("theta_draws", "%.17g"),
    "b": ("b_draws", "%.17g"),
    "z": ("z_draws", "%d"),
    "g": ("g_draws", "%d"),
    "psi_theta": ("psi_theta_draws", "%.17g"),
    "loglik": ("loglik_draws", "%.17g"),
    "subject_loglik": ("per_subject_loglik_draws", "%.17g"),
    "lambda_theta": ("lambda_theta_draws", "%.17g"),
    "lambda_b": ("lambda_b_draws", "%.17g"),
}


def save_chain(output: ChainOutput, directory) -> None:
    """Write draws as one CSV per parameter block plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, (attr, fmt) in _CSV_FILES.items():
        arr = getattr(output, attr)
        if arr is None:
            continue
        np.savetxt(directory / f"{name}.csv", np.atleast_2d(arr.T).T, fmt=fmt, delimiter=",")
    np.savetxt(directory / "k.csv",
               np.column_stack([output.k_theta_draws, output.k_b_draws]),
               fmt="%d", delimiter=",", header="k_theta,k_b", comments="")
    manifest = {
        "variant": output.variant,
        "n_keep": output.n_keep,
        "n_subjects": output.n_subjects,
        "n_items": output.n_items,
        "seed": output.config.seed if output.config else None,
        "config": _config_dict(output.config) if output.config else None,
        "accept_rate_theta": output.accept_rate_theta,
        "accept_rate_b": output.accept_rate_b,
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_chain(directory) -> ChainOutput:
    """Read back a draws directory written by save_chain."""
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    arrays = {}
    for name, (attr, fmt) in _CSV_FILES.items():
        path = directory / f"{name}.csv"
        if not path.exists():
            arrays[attr] = None
            continue
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
        arrays[attr] = arr.astype(int) if fmt == "%d" else arr
    k = np.loadtxt(directory / "k.csv", delimiter=",", skiprows=1, ndmin=2).astype(int)
    cfg = ChainConfig(**manifest["config"]) if manifest.get("config") else None
    return ChainOutput(
        variant=manifest["variant"],
        theta_draws=arrays["theta_draws"], b_draws=arrays["b_draws"],
        z_draws=arrays["z_draws"], g_draws=arrays["g_draws"],
        k_theta_draws=k[:, 0], k_b_draws=k[:, 1],
        psi_theta_draws=arrays["psi_theta_draws"].ravel(),
        loglik_draws=arrays["loglik_draws"].ravel(),
        per_subject_loglik_draws=arrays["per_subject_loglik_draws"],
        lambda_theta_draws=None if arrays["lambda_theta_draws"] is None
        else arrays["lambda_theta_draws"].ravel(),
        lambda_b_draws=None if arrays["lambda_b_draws"] is None
        else arrays["lambda_b_draws"].ravel(),
        accept_rate_theta=manifest.get("accept_rate_theta", math.nan),
        accept_rate_b=manifest.get("accept_rate_b", math.nan),
        config=cfg,
    )


def _config_dict(cfg: ChainConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in cfg.__dataclass_fields__.values()}
