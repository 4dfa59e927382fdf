"""Generative constructions and densities for the clustering priors.

Two routes exist for drawing mixture weights under a random number of
components K with K - 1 ~ Poisson(lambda):

* the exponential-spacings construction (valid only for Dirichlet symmetry
  gamma = 1): i.i.d. Exp(lambda) stick lengths are laid down until they
  cover the unit interval, and the overshooting stick absorbs the remainder;
* the general two-stage form: draw K from its p.m.f., then weights from a
  symmetric Dirichlet(gamma, ..., gamma).

The two agree in distribution at gamma = 1, which the test suite checks.
A truncated stick-breaking sampler for the Dirichlet-process baseline and
the hyperprior spec grammar used by the samplers live here too.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import ConfigError


@dataclass(frozen=True)
class MfmConfig:
    """Mixture-of-finite-mixtures prior: Dirichlet symmetry gamma, Poisson rate lambda."""

    gamma: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class DpConfig:
    """Dirichlet-process baseline: concentration alpha, finite truncation level."""

    alpha: float = 1.0
    truncation: int = 50

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.truncation < 2:
            raise ConfigError(f"truncation must be >= 2, got {self.truncation}")


@dataclass(frozen=True)
class BaseMeasure:
    """Normal base measure N(mean, 1/precision) for cluster-level values."""

    precision: float
    mean: float = 0.0

    def __post_init__(self):
        if not self.precision > 0:
            raise ConfigError(f"precision must be positive, got {self.precision}")

    @property
    def sd(self) -> float:
        return 1.0 / math.sqrt(self.precision)

    def sample(self, rng, size=None):
        return rng.normal(self.mean, self.sd, size=size)

    def log_density(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) * math.sqrt(self.precision)
        return 0.5 * (math.log(self.precision) - math.log(2.0 * math.pi)) - 0.5 * z * z


def log_k_pmf(cfg: MfmConfig, k) -> np.ndarray:
    """log P(K = k) where K - 1 is Poisson(lambda); k may be an array."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ConfigError("component count k must be >= 1")
    return -cfg.lam + (k - 1) * math.log(cfg.lam) - gammaln(k)


def sample_mfm_weights(cfg: MfmConfig, rng):
    """One draw of (K, weights) via the exponential-spacings construction.

    Only defined for gamma = 1; other gamma must use the general sampler.
    """
    if cfg.gamma != 1.0:
        raise ConfigError(
            f"exponential-spacings construction requires gamma=1, got {cfg.gamma}; "
            "use sample_mfm_weights_general"
        )
    spacings = rng.exponential(scale=1.0 / cfg.lam, size=8)
    total = np.cumsum(spacings)
    while total[-1] < 1.0:
        more = rng.exponential(scale=1.0 / cfg.lam, size=len(spacings))
        spacings = np.concatenate([spacings, more])
        total = np.cumsum(spacings)
    k = int(np.argmax(total >= 1.0)) + 1
    weights = np.empty(k)
    weights[: k - 1] = spacings[: k - 1]
    weights[k - 1] = 1.0 - total[k - 2] if k > 1 else 1.0
    return k, weights


def sample_mfm_weights_general(cfg: MfmConfig, rng):
    """One draw of (K, weights): K from its p.m.f., weights ~ Dirichlet(gamma,...)."""
    k = int(rng.poisson(cfg.lam)) + 1
    weights = rng.dirichlet(np.full(k, cfg.gamma))
    return k, weights


def sample_dp_weights(cfg: DpConfig, rng) -> np.ndarray:
    """Truncated stick-breaking weights; the last stick absorbs the remainder."""
    sticks = rng.beta(1.0, cfg.alpha, size=cfg.truncation - 1)
    return stick_weights(sticks)


def stick_weights(sticks: np.ndarray) -> np.ndarray:
    """Map H-1 stick fractions to an H-simplex (remainder in the last entry)."""
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - sticks)])
    weights = np.empty(len(sticks) + 1)
    weights[:-1] = sticks * remaining[:-1]
    weights[-1] = remaining[-1]
    return weights


_SPEC_RE = re.compile(r"^\s*(log_normal|lognormal|gamma|uniform)\s*\(\s*([^,]+)\s*,\s*([^)]+)\s*\)\s*$")

_HYPERPRIOR_NAMES = frozenset({"lambda_b", "lambda_theta", "psi_theta"})


@dataclass(frozen=True)
class HyperpriorSpec:
    """A named 2-parameter prior: log_normal(mu,sigma), gamma(a,b) or uniform(lo,hi).

    gamma(a,b) uses the shape/rate convention (mean a/b). Provides draws plus
    the log-density needed in Metropolis-Hastings ratios.
    """

    family: str
    params: tuple
    _dist: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a, b = self.params
        if self.family == "log_normal":
            if b <= 0:
                raise ConfigError(f"log_normal sigma must be positive, got {b}")
            dist = stats.lognorm(s=b, scale=math.exp(a))
        elif self.family == "gamma":
            if a <= 0 or b <= 0:
                raise ConfigError(f"gamma(a,b) needs positive parameters, got {self.params}")
            dist = stats.gamma(a, scale=1.0 / b)
        elif self.family == "uniform":
            if not a < b:
                raise ConfigError(f"uniform(lo,hi) needs lo < hi, got {self.params}")
            dist = stats.uniform(loc=a, scale=b - a)
        else:
            raise ConfigError(f"unknown prior family {self.family!r}")
        object.__setattr__(self, "_dist", dist)

    @classmethod
    def parse(cls, text) -> "HyperpriorSpec":
        if isinstance(text, HyperpriorSpec):
            return text
        m = _SPEC_RE.match(str(text))
        if m is None:
            raise ConfigError(
                f"cannot parse prior spec {text!r}; expected e.g. gamma(1,1), "
                "uniform(0,1) or log_normal(0,1)"
            )
        family = "log_normal" if m.group(1) in ("log_normal", "lognormal") else m.group(1)
        try:
            params = (float(m.group(2)), float(m.group(3)))
        except ValueError as exc:
            raise ConfigError(f"non-numeric parameter in prior spec {text!r}") from exc
        return cls(family, params)

    def sample(self, rng) -> float:
        return float(self._dist.rvs(random_state=rng))

    def log_density(self, x) -> float:
        # direct formulas: this sits inside per-sweep MH ratios, where the
        # generic scipy logpdf dispatch is the dominant cost
        a, b = self.params
        if self.family == "uniform":
            return -math.log(b - a) if a <= x <= b else -math.inf
        if x <= 0:
            return -math.inf
        if self.family == "log_normal":
            z = (math.log(x) - a) / b
            return -math.log(x * b) - 0.5 * math.log(2.0 * math.pi) - 0.5 * z * z
        return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x

    def cdf(self, x):
        return self._dist.cdf(x)

    def __str__(self):
        a, b = self.params
        return f"{self.family}({a:g},{b:g})"


def sample_hyperprior(name: str, spec, rng) -> float:
    """One draw from the named hyperprior (name is validated, spec parsed)."""
    if name not in _HYPERPRIOR_NAMES:
        raise ConfigError(f"unknown hyperparameter {name!r}; expected one of {sorted(_HYPERPRIOR_NAMES)}")
    return HyperpriorSpec.parse(spec).sample(rng)
