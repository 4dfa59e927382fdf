import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gammaln

from raschclust.data import ResponseMatrix
from raschclust.errors import ChainDivergedError
from raschclust.model import rasch_prob
from raschclust.priors import BaseMeasure, HyperpriorSpec, MfmConfig
from raschclust.sampler import (
    ChainConfig,
    PartitionState,
    _Storage,
    allocation_log_probs,
    canonicalize_partition,
    mfm_log_joint,
    run_chain,
    run_dp_chain,
    telescoping_log_weights,
    update_allocations,
    update_dp_sticks,
    update_lambda,
    update_psi,
    update_values,
    update_weights_and_k,
)

from conftest import make_design_data, short_chain


def brute_allocation_probs(y, weights, values, other_exp, flip):
    """Oracle: per-unit conditional by direct probability products."""
    n, m = y.shape
    out = np.zeros((n, len(weights)))
    for i in range(n):
        for k, v in enumerate(values):
            prob = weights[k]
            for j in range(m):
                p = rasch_prob(other_exp[j], v) if flip else rasch_prob(v, other_exp[j])
                prob *= p if y[i, j] == 1 else (1 - p)
            out[i, k] = prob
    return out / out.sum(axis=1, keepdims=True)


class TestAllocations:
    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        y = np.array([[1.0, 0.0], [0.0, 0.0]])
        weights = np.array([0.3, 0.7])
        values = np.array([-0.5, 1.2])
        other = np.array([0.2, -0.4])
        for flip in (False, True):
            got = np.exp(allocation_log_probs(y, weights, values, other, flip=flip))
            want = brute_allocation_probs(y, weights, values, other, flip)
            assert np.allclose(got, want, atol=1e-12)

    def test_single_component_forces_label_zero(self):
        rng = np.random.default_rng(1)
        state = PartitionState(1, np.array([1.0]), np.zeros(4, dtype=int), np.array([0.3]))
        y = (rng.random((4, 3)) < 0.5).astype(float)
        new = update_allocations(state, y, np.zeros(3), rng)
        assert np.all(new.labels == 0)

    def test_symmetric_components_give_uniform_conditional(self):
        y = np.array([[1.0, 0.0], [1.0, 1.0]])
        probs = np.exp(allocation_log_probs(
            y, np.array([0.5, 0.5]), np.array([0.7, 0.7]), np.zeros(2)))
        assert np.allclose(probs, 0.5, atol=1e-12)


class TestValues:
    def test_empty_component_gets_base_draw(self):
        # all units in component 0; component 1 stays empty and must follow the base
        rng = np.random.default_rng(2)
        base = BaseMeasure(precision=4.0)
        y = np.ones((5, 3))
        fresh = []
        for _ in range(4000):
            state = PartitionState(2, np.array([0.5, 0.5]), np.zeros(5, dtype=int),
                                   np.array([0.0, 0.0]))
            new, _, occ = update_values(state, y, np.zeros(3), base, rng, 0.5)
            assert occ == 1
            fresh.append(new.values[1])
        p = stats.kstest(np.array(fresh), stats.norm(0, 0.5).cdf).pvalue
        assert p > 0.001

    def test_single_cell_posterior_against_quadrature(self):
        # one subject, one item, y=1, b=0, loose base: P(theta > 0 | y) from the
        # chain must match numerical integration of sigma(t) * N(t; 0, 4)
        base = BaseMeasure(precision=0.25)
        y = np.ones((1, 1))
        numer, _ = integrate.quad(
            lambda t: rasch_prob(t, 0.0) * math.exp(base.log_density(t)), 0, 30)
        denom, _ = integrate.quad(
            lambda t: rasch_prob(t, 0.0) * math.exp(base.log_density(t)), -30, 30)
        oracle = numer / denom
        assert oracle > 0.5

        rng = np.random.default_rng(3)
        state = PartitionState(1, np.array([1.0]), np.zeros(1, dtype=int), np.array([0.0]))
        draws = []
        for _ in range(20000):
            state, _, _ = update_values(state, y, np.zeros(1), base, rng, 1.5)
            draws.append(state.values[0])
        frac_positive = np.mean(np.array(draws[200:]) > 0)
        assert frac_positive == pytest.approx(oracle, abs=0.03)

    def test_acceptance_rate_lands_in_window(self, design1_small):
        data, _ = design1_small
        out = run_chain(data, short_chain(n_burnin=1500, n_keep=500))
        assert 0.2 <= out.accept_rate_theta <= 0.6
        assert 0.2 <= out.accept_rate_b <= 0.6


class TestWeightsAndK:
    def test_k_never_below_occupied(self):
        rng = np.random.default_rng(4)
        base = BaseMeasure(precision=1.0)
        labels = np.array([0, 1, 2, 2, 1, 0])
        for _ in range(200):
            state = PartitionState(4, np.full(4, 0.25), labels, np.arange(4.0))
            new = update_weights_and_k(state, MfmConfig(1.0, 1.0), base, rng)
            assert new.k >= 3
            assert abs(new.weights.sum() - 1.0) < 1e-12
            assert len(new.values) == new.k

    def test_single_observation_conditional_reduces_to_prior_pmf(self):
        # with n=1, gamma=1 the combinatorial and Dirichlet factors cancel and
        # P(K | partition) is exactly the shifted-Poisson prior
        logw = telescoping_log_weights(MfmConfig(1.0, 1.0), k_occ=1, n=1, k_extra=60)
        probs = np.exp(logw - logw.max())
        probs /= probs.sum()
        ks = np.arange(1, 62)
        pmf = np.exp(-1.0 - gammaln(ks))
        assert np.allclose(probs, pmf / pmf.sum(), atol=1e-12)
        assert probs[0] == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_two_unit_occupancy_matches_exact_enumeration(self):
        # Gibbs over (K, weights, labels) with a pinned rate; the stationary
        # P(K_occ = 1) has the closed form sum_K p(K) * 2 / (K + 1)
        exact = sum(
            math.exp(-1.0) / math.factorial(k - 1) * 2.0 / (k + 1.0)
            for k in range(1, 60)
        )
        y = np.zeros((2, 2), dtype=int)
        cfg = ChainConfig(variant="mfm", n_burnin=1000, n_keep=30000, thin=1, seed=5,
                          prior_only=True,
                          lambda_theta_prior="gamma(4000000,4000000)",
                          lambda_b_prior="gamma(4000000,4000000)")
        out = run_chain(ResponseMatrix(y), cfg)
        assert np.mean(out.k_theta_draws == 1) == pytest.approx(exact, abs=0.02)

    def test_canonicalize_orders_by_first_appearance(self):
        labels = np.array([5, 1, 5, 3, 1])
        values = np.array([0.0, 10.0, 20.0, 30.0, 40.0, 50.0])
        new_labels, occ_values, counts = canonicalize_partition(labels, values)
        assert new_labels.tolist() == [0, 1, 0, 2, 1]
        assert occ_values.tolist() == [50.0, 10.0, 30.0]
        assert counts.tolist() == [2, 2, 1]


class TestLambda:
    def test_uniform_prior_respects_support(self):
        rng = np.random.default_rng(6)
        prior = HyperpriorSpec.parse("uniform(0,1)")
        lam = 0.5
        for _ in range(2000):
            lam = update_lambda(3, lam, prior, rng)
            assert 0 < lam < 1

    def test_fixed_k_one_posterior_matches_grid_oracle(self):
        # K=1 & Gamma(1,1) prior: posterior is proportional to e^-lam * e^-lam,
        # an Exp(2); grid integration gives the mean for the cross-check
        grid = np.linspace(1e-6, 20, 200001)
        dens = np.exp(-grid) * np.exp(-grid)
        oracle_mean = float(np.trapezoid(grid * dens, grid) / np.trapezoid(dens, grid))
        assert oracle_mean == pytest.approx(0.5, abs=1e-4)

        rng = np.random.default_rng(7)
        prior = HyperpriorSpec.parse("gamma(1,1)")
        lam, draws = 1.0, []
        for _ in range(60000):
            lam = update_lambda(1, lam, prior, rng)
            draws.append(lam)
        assert np.mean(draws[500:]) == pytest.approx(oracle_mean, abs=0.05)
        assert np.mean(draws[500:]) < 1.0  # K=1 favors small rates


class TestPsi:
    def test_two_cluster_arithmetic(self):
        rng = np.random.default_rng(8)
        draws = np.array([update_psi(np.array([1.0, -1.0]), 100.0, 1.0, rng)
                          for _ in range(100000)])
        assert abs(draws.mean() - 50.5) < 0.5  # Gamma(101, 2) has mean 50.5

    def test_single_zero_value_distribution(self):
        rng = np.random.default_rng(9)
        draws = np.array([update_psi(np.array([0.0]), 100.0, 1.0, rng)
                          for _ in range(20000)])
        p = stats.kstest(draws, stats.gamma(100.5, scale=1.0).cdf).pvalue
        assert p > 0.001

    def test_conjugacy_against_grid(self):
        # normalized version of Gamma(psi;100,1) * prod_k N(v_k; 0, 1/psi) must
        # equal the Gamma(100 + K/2, 1 + sum v^2/2) density
        values = np.array([0.4, -0.9, 1.3])
        grid = np.linspace(15, 90, 60001)
        log_un = (99.0 * np.log(grid) - grid
                  + 0.5 * len(values) * np.log(grid)
                  - 0.5 * grid * float(values @ values))
        un = np.exp(log_un - log_un.max())
        un /= np.trapezoid(un, grid)
        shape = 100.0 + 0.5 * len(values)
        rate = 1.0 + 0.5 * float(values @ values)
        closed = stats.gamma(shape, scale=1.0 / rate).pdf(grid)
        assert np.max(np.abs(un - closed)) < 1e-6


class TestDpSticks:
    def test_conditional_beta_parameters(self):
        # H=2, n_1=5, n_2=0, alpha=1: the only stick is Beta(6, 1)
        rng = np.random.default_rng(10)
        labels = np.zeros(5, dtype=int)
        firsts = np.array([update_dp_sticks(labels, 2, 1.0, rng)[0] for _ in range(20000)])
        p = stats.kstest(firsts, stats.beta(6, 1).cdf).pvalue
        assert p > 0.001

    def test_tail_counts(self):
        # h=0 stick competes against everything allocated beyond it
        rng = np.random.default_rng(11)
        labels = np.array([0, 1, 1, 2, 2, 2])
        draws = np.array([update_dp_sticks(labels, 4, 0.5, rng)[0] for _ in range(20000)])
        p = stats.kstest(draws, stats.beta(1 + 1, 0.5 + 5).cdf).pvalue
        assert p > 0.001


class TestRunChain:
    def test_bit_identical_given_seed(self, coinflip_data):
        a = run_chain(coinflip_data, short_chain(seed=33))
        b = run_chain(coinflip_data, short_chain(seed=33))
        assert np.array_equal(a.theta_draws, b.theta_draws)
        assert np.array_equal(a.b_draws, b.b_draws)
        assert np.array_equal(a.z_draws, b.z_draws)
        assert np.array_equal(a.k_b_draws, b.k_b_draws)
        assert np.array_equal(a.lambda_theta_draws, b.lambda_theta_draws)

    def test_homogeneous_data_finds_single_cluster(self):
        rng = np.random.default_rng(12)
        y = (rng.random((40, 20)) < 0.5).astype(int)  # one shared theta=b=0
        out = run_chain(ResponseMatrix(y), short_chain(n_burnin=800, n_keep=600, seed=2))
        assert np.bincount(out.k_theta_draws).argmax() == 1
        assert np.bincount(out.k_b_draws).argmax() == 1

    def test_streaming_determinism(self, coinflip_data):
        shorter = run_chain(coinflip_data, short_chain(seed=9, n_keep=100))
        longer = run_chain(coinflip_data, short_chain(seed=9, n_keep=200))
        assert np.array_equal(shorter.theta_draws, longer.theta_draws[:100])
        assert np.array_equal(shorter.k_b_draws, longer.k_b_draws[:100])

    def test_plain_recovers_sign_of_ability_gap(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            theta = np.where(np.arange(40) < 20, 1.5, -1.5)
            b = np.zeros(20)
            y = (rng.random((40, 20)) < rasch_prob(theta[:, None], b[None, :])).astype(int)
            cfg = ChainConfig(variant="plain", n_burnin=600, n_keep=400, thin=1, seed=seed)
            out = run_chain(ResponseMatrix(y), cfg)
            theta_hat = out.theta_draws.mean(axis=0)
            if theta_hat[:20].mean() > theta_hat[20:].mean():
                hits += 1
        assert hits >= 19  # >= 95% of seeds

    def test_dp_variant_contracts(self, coinflip_data):
        cfg = short_chain(variant="dp", truncation=15, seed=21)
        a = run_dp_chain(coinflip_data, cfg)
        b = run_dp_chain(coinflip_data, cfg)
        assert np.array_equal(a.theta_draws, b.theta_draws)
        assert a.lambda_theta_draws is None
        assert np.all(a.k_theta_draws <= 15)
        rng = np.random.default_rng(13)
        y_h = (rng.random((40, 20)) < 0.5).astype(int)
        out = run_chain(ResponseMatrix(y_h), short_chain(
            variant="dp", truncation=20, n_burnin=800, n_keep=600, seed=3))
        assert np.bincount(out.k_theta_draws).argmax() == 1

    def test_storage_rejects_nonfinite_loglik(self):
        store = _Storage(short_chain(n_keep=1), 2, 2)
        with pytest.raises(ChainDivergedError):
            store.store(np.ones((2, 2)), np.array([np.nan, 0.0]), np.zeros(2),
                        np.zeros(2, dtype=int), np.zeros(2, dtype=int),
                        1.0, 1.0, 1.0, False)


class TestLogJoint:
    def _states(self, seed):
        rng = np.random.default_rng(seed)
        data, _ = make_design_data(8, 5, seed=seed)
        st_t = PartitionState(3, rng.dirichlet(np.ones(3)),
                              rng.integers(0, 3, size=8), rng.standard_normal(3), 1.3)
        st_b = PartitionState(2, rng.dirichlet(np.ones(2)),
                              rng.integers(0, 2, size=5), rng.standard_normal(2), 0.8)
        return data, st_t, st_b

    def test_label_permutation_invariance(self):
        cfg = ChainConfig(variant="mfm")
        for seed in range(5):
            data, st_t, st_b = self._states(seed)
            base = mfm_log_joint(data, st_t, st_b, 95.0, cfg)
            perm = np.array([2, 0, 1])
            permuted = PartitionState(
                3, st_t.weights[perm], np.argsort(perm)[st_t.labels],
                st_t.values[perm], st_t.lam)
            assert mfm_log_joint(data, permuted, st_b, 95.0, cfg) == pytest.approx(
                base, abs=1e-10)

    def test_finite_along_a_chain(self, coinflip_data):
        out = run_chain(coinflip_data, short_chain(seed=17, n_keep=50))
        assert np.all(np.isfinite(out.loglik_draws))


class TestPriorReproduction:
    def test_dp_variant(self):
        y = np.zeros((15, 6), dtype=int)
        cfg = ChainConfig(variant="dp", n_burnin=500, n_keep=8000, thin=1, seed=23,
                          prior_only=True, alpha=1.0, truncation=12)
        out = run_chain(ResponseMatrix(y), cfg)
        # forward draws from the truncated stick-breaking prior
        rng = np.random.default_rng(24)
        ref = []
        for _ in range(20000):
            sticks = rng.beta(1.0, 1.0, size=11)
            w = np.concatenate([sticks, [1.0]])
            w[1:] *= np.cumprod(1.0 - sticks)
            z = rng.choice(12, size=15, p=w / w.sum())
            ref.append(len(np.unique(z)))
        ref = np.bincount(np.array(ref), minlength=13)[1:]
        chain = np.bincount(out.k_theta_draws[::8], minlength=13)[1:]
        keep = (ref >= 5) & (chain >= 0)
        table = np.vstack([ref[keep], chain[keep]])
        table = table[:, table.sum(axis=0) > 0]
        p = stats.chi2_contingency(table).pvalue
        assert p > 0.001
        p_psi = stats.kstest(out.psi_theta_draws[::8], stats.gamma(100).cdf).pvalue
        assert p_psi > 0.001

    def test_plain_variant(self):
        y = np.zeros((10, 4), dtype=int)
        cfg = ChainConfig(variant="plain", n_burnin=2000, n_keep=20000, thin=1, seed=25,
                          prior_only=True, plain_psi_prior="gamma(2,2)")
        out = run_chain(ResponseMatrix(y), cfg)
        p = stats.kstest(out.psi_theta_draws[::20], stats.gamma(2, scale=0.5).cdf).pvalue
        assert p > 0.001
