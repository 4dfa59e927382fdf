import numpy as np
import pytest

from raschclust.data import ResponseMatrix
from raschclust.model import rasch_prob
from raschclust.sampler import ChainConfig


def make_design_data(n, j, seed, values=(-2.0, 0.0, 2.0), noise_sd=0.0):
    """Three-cluster Rasch data with known truth, for recovery tests."""
    rng = np.random.default_rng(seed)
    values = np.asarray(values)
    z = rng.integers(0, len(values), size=n)
    g = rng.integers(0, len(values), size=j)
    theta = values[z] + noise_sd * rng.standard_normal(n)
    b = values[g] + noise_sd * rng.standard_normal(j)
    y = (rng.random((n, j)) < rasch_prob(theta[:, None], b[None, :])).astype(int)
    return ResponseMatrix(y), {"theta": theta, "b": b, "z": z + 1, "g": g + 1}


@pytest.fixture(scope="session")
def design1_small():
    return make_design_data(60, 20, seed=42)


@pytest.fixture
def coinflip_data():
    rng = np.random.default_rng(0)
    return ResponseMatrix((rng.random((12, 8)) < 0.5).astype(int))


def short_chain(variant="mfm", **kw):
    defaults = dict(variant=variant, n_burnin=400, n_keep=300, thin=1, seed=1,
                    lambda_theta_prior="gamma(1,1)", lambda_b_prior="gamma(1,1)")
    defaults.update(kw)
    return ChainConfig(**defaults)
