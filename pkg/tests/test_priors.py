import math

import numpy as np
import pytest
from scipy import stats

from raschclust.errors import ConfigError
from raschclust.priors import (
    BaseMeasure,
    DpConfig,
    HyperpriorSpec,
    MfmConfig,
    log_k_pmf,
    sample_dp_weights,
    sample_hyperprior,
    sample_mfm_weights,
    sample_mfm_weights_general,
)


def shifted_poisson_pmf(k, lam):
    return math.exp(-lam) * lam ** (k - 1) / math.factorial(k - 1)


class TestMfmConstruction:
    def test_tiny_rate_forces_single_component(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k, w = sample_mfm_weights(MfmConfig(lam=1e-9), rng)
            assert k == 1
            assert w.tolist() == [1.0]

    def test_weights_are_a_simplex(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            k, w = sample_mfm_weights(MfmConfig(lam=1.0), rng)
            assert len(w) == k
            assert np.all(w > 0)
            assert abs(w.sum() - 1.0) < 1e-12

    def test_k_one_probability(self):
        rng = np.random.default_rng(2)
        draws = np.array([sample_mfm_weights(MfmConfig(lam=1.0), rng)[0] for _ in range(100000)])
        assert abs(np.mean(draws == 1) - math.exp(-1)) < 0.01

    def test_k_distribution_matches_shifted_poisson(self):
        rng = np.random.default_rng(3)
        draws = np.array([sample_mfm_weights(MfmConfig(lam=1.0), rng)[0] for _ in range(30000)])
        kmax = draws.max()
        observed = np.bincount(draws, minlength=kmax + 1)[1:]
        expected = np.array([shifted_poisson_pmf(k, 1.0) for k in range(1, kmax + 1)])
        expected[-1] += 1.0 - expected.sum()  # fold the tail into the last bin
        expected *= len(draws)
        keep = expected >= 5
        observed = np.append(observed[keep], observed[~keep].sum())
        expected = np.append(expected[keep], expected[~keep].sum())
        p = stats.chisquare(observed, expected).pvalue
        assert p > 0.001

    def test_rejects_non_unit_gamma(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigError, match="gamma=1"):
            sample_mfm_weights(MfmConfig(gamma=2.0, lam=1.0), rng)


class TestMfmGeneral:
    def test_mean_component_count(self):
        rng = np.random.default_rng(4)
        ks = np.array([sample_mfm_weights_general(MfmConfig(lam=1.0), rng)[0]
                       for _ in range(100000)])
        assert abs(ks.mean() - 2.0) < 0.02

    def test_unit_gamma_two_components_weight_uniform(self):
        rng = np.random.default_rng(5)
        firsts = []
        while len(firsts) < 10000:
            k, w = sample_mfm_weights_general(MfmConfig(gamma=1.0, lam=1.0), rng)
            if k == 2:
                firsts.append(w[0])
        p = stats.kstest(np.array(firsts), stats.uniform.cdf).pvalue
        assert p > 0.01

    def test_agrees_with_spacings_construction(self):
        rng = np.random.default_rng(6)
        n = 30000
        spac = [sample_mfm_weights(MfmConfig(lam=1.0), rng) for _ in range(n)]
        gen = [sample_mfm_weights_general(MfmConfig(lam=1.0), rng) for _ in range(n)]
        k_spac = np.array([k for k, _ in spac])
        k_gen = np.array([k for k, _ in gen])
        assert abs(k_spac.mean() - k_gen.mean()) < 0.02
        maxw_spac = np.array([w.max() for _, w in spac])
        maxw_gen = np.array([w.max() for _, w in gen])
        assert abs(maxw_spac.mean() - maxw_gen.mean()) < 0.02


class TestDpWeights:
    def test_tiny_alpha_puts_everything_on_first_stick(self):
        rng = np.random.default_rng(7)
        w = sample_dp_weights(DpConfig(alpha=1e-9, truncation=10), rng)
        assert w[0] > 1.0 - 1e-6

    def test_first_weight_mean_at_unit_alpha(self):
        rng = np.random.default_rng(8)
        firsts = np.array([sample_dp_weights(DpConfig(alpha=1.0, truncation=25), rng)[0]
                           for _ in range(100000)])
        assert abs(firsts.mean() - 0.5) < 0.01

    def test_simplex(self):
        rng = np.random.default_rng(9)
        for _ in range(500):
            w = sample_dp_weights(DpConfig(alpha=2.0, truncation=50), rng)
            assert np.all(w >= 0)
            assert abs(w.sum() - 1.0) < 1e-12

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            DpConfig(alpha=-1.0)
        with pytest.raises(ConfigError):
            DpConfig(truncation=1)


class TestKPmf:
    def test_mass_at_one(self):
        assert log_k_pmf(MfmConfig(lam=1.0), 1) == pytest.approx(-1.0, abs=1e-12)

    def test_mass_at_three(self):
        assert log_k_pmf(MfmConfig(lam=1.0), 3) == pytest.approx(
            -1.0 - math.log(2.0), abs=1e-12
        )

    def test_normalization(self):
        total = np.exp(log_k_pmf(MfmConfig(lam=1.0), np.arange(1, 51))).sum()
        assert abs(total - 1.0) < 1e-12

    def test_rejects_nonpositive_k(self):
        with pytest.raises(ConfigError):
            log_k_pmf(MfmConfig(lam=1.0), 0)


class TestHyperpriors:
    def test_log_normal_median(self):
        rng = np.random.default_rng(10)
        spec = HyperpriorSpec.parse("log_normal(0,1)")
        draws = np.array([spec.sample(rng) for _ in range(100000)])
        assert abs(np.median(draws) - 1.0) < 0.02

    def test_gamma_mean(self):
        rng = np.random.default_rng(11)
        spec = HyperpriorSpec.parse("gamma(100,1)")
        draws = np.array([spec.sample(rng) for _ in range(100000)])
        assert abs(draws.mean() - 100.0) < 1.0

    def test_uniform_support(self):
        rng = np.random.default_rng(12)
        spec = HyperpriorSpec.parse("uniform(0,1)")
        draws = np.array([spec.sample(rng) for _ in range(2000)])
        assert np.all((draws > 0) & (draws < 1))

    def test_log_density_matches_scipy(self):
        # the fast scalar paths against the reference implementations
        grid = [0.05, 0.3, 1.0, 2.5, 17.0]
        cases = {
            "log_normal(0.3,1.2)": stats.lognorm(s=1.2, scale=math.exp(0.3)),
            "gamma(2,3)": stats.gamma(2, scale=1 / 3),
            "uniform(0.1,2)": stats.uniform(loc=0.1, scale=1.9),
        }
        for text, dist in cases.items():
            spec = HyperpriorSpec.parse(text)
            for x in grid:
                expected = float(dist.logpdf(x))
                got = spec.log_density(x)
                if math.isinf(expected):
                    assert math.isinf(got)
                else:
                    assert got == pytest.approx(expected, abs=1e-12)

    def test_named_draw_validates_name(self):
        rng = np.random.default_rng(13)
        assert sample_hyperprior("lambda_b", "gamma(1,1)", rng) > 0
        with pytest.raises(ConfigError):
            sample_hyperprior("nope", "gamma(1,1)", rng)

    def test_bad_specs_rejected(self):
        for text in ("gamma(-1,1)", "uniform(1,0)", "gamma(1)", "cauchy(0,1)", "gamma(a,b)"):
            with pytest.raises(ConfigError):
                HyperpriorSpec.parse(text)


def test_base_measure_draws_and_density():
    rng = np.random.default_rng(14)
    base = BaseMeasure(precision=4.0)
    draws = np.array([base.sample(rng) for _ in range(50000)])
    assert abs(draws.std() - 0.5) < 0.01
    assert base.log_density(0.3) == pytest.approx(
        stats.norm(0, 0.5).logpdf(0.3), abs=1e-12
    )
