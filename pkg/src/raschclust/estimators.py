"""Scikit-learn style estimators wrapping the MCMC engine.

All three estimators share the shape::

    model = MFMRaschClustering(n_burnin=..., seed=...)
    model.fit(X)              # X: (N, J) binary matrix or ResponseMatrix
    model.subject_labels_     # clustering of the N subjects (1-based)
    model.predict_proba()     # fitted (N, J) response probabilities

They are transductive: the chain is run on the training matrix and all
summaries refer to its subjects and items. ``get_params`` / ``set_params``
/ ``clone`` behave as usual, so the estimators compose with model-selection
tooling that only touches hyperparameters.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .diagnostics import auc, comparison_report, fitted_probabilities
from .posterior import summarize_chain
from .sampler import ChainConfig, run_chain
from .validation import as_response_matrix


class _RaschEstimatorBase(BaseEstimator):
    _variant = None

    def _chain_config(self) -> ChainConfig:
        raise NotImplementedError

    def fit(self, X, y=None):
        """Run the chain on a binary response matrix; returns self."""
        data = as_response_matrix(X)
        self.chain_ = run_chain(data, self._chain_config())
        self.summary_ = summarize_chain(self.chain_, level=self.hpd_level)
        self.report_ = comparison_report(self.chain_, data)
        self.theta_hat_ = np.asarray(self.summary_.theta_hat)
        self.b_hat_ = np.asarray(self.summary_.b_hat)
        self.n_subjects_ = data.n_subjects
        self.n_items_ = data.n_items
        return self

    def _check_fitted(self):
        if not hasattr(self, "chain_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict_proba(self) -> np.ndarray:
        """Fitted response probabilities at the posterior-mean parameters."""
        self._check_fitted()
        return fitted_probabilities(self.chain_)

    def score(self, X=None, y=None) -> float:
        """In-sample AUC of the fitted probabilities (matches the report)."""
        self._check_fitted()
        return self.report_.auc


class _ClusteringMixin:
    def fit(self, X, y=None):
        super().fit(X)
        self.subject_labels_ = np.asarray(self.summary_.partition_theta)
        self.item_labels_ = np.asarray(self.summary_.partition_b)
        self.n_subject_clusters_ = self.summary_.modal_k_theta
        self.n_item_clusters_ = self.summary_.modal_k_b
        return self

    def fit_predict(self, X, y=None) -> np.ndarray:
        """Fit and return the subject cluster labels."""
        return self.fit(X).subject_labels_


class MFMRaschClustering(_ClusteringMixin, _RaschEstimatorBase):
    """Rasch model with a random number of clusters on both blocks.

    Both the number of clusters and the cluster memberships of subjects and
    items are inferred; K - 1 carries a Poisson(rate) prior with the rate
    under its own hyperprior, weights a symmetric Dirichlet(gamma).
    """

    _variant = "mfm"

    def __init__(self, n_burnin=20000, n_keep=10000, thin=2, seed=0,
                 gamma=1.0, lambda_theta_prior="log_normal(0,1)",
                 lambda_b_prior="log_normal(0,1)", psi_b=100.0,
                 psi_theta_prior="gamma(100,1)", proposal_sd_init=0.5,
                 adapt=True, center=False, hpd_level=0.68):
        self.n_burnin = n_burnin
        self.n_keep = n_keep
        self.thin = thin
        self.seed = seed
        self.gamma = gamma
        self.lambda_theta_prior = lambda_theta_prior
        self.lambda_b_prior = lambda_b_prior
        self.psi_b = psi_b
        self.psi_theta_prior = psi_theta_prior
        self.proposal_sd_init = proposal_sd_init
        self.adapt = adapt
        self.center = center
        self.hpd_level = hpd_level

    def _chain_config(self) -> ChainConfig:
        return ChainConfig(
            variant="mfm", n_burnin=self.n_burnin, n_keep=self.n_keep,
            thin=self.thin, seed=self.seed, gamma=self.gamma,
            lambda_theta_prior=self.lambda_theta_prior,
            lambda_b_prior=self.lambda_b_prior, psi_b=self.psi_b,
            psi_theta_prior=self.psi_theta_prior,
            proposal_sd_init=self.proposal_sd_init, adapt=self.adapt,
            center=self.center,
        )


class DPRaschClustering(_ClusteringMixin, _RaschEstimatorBase):
    """Rasch model with truncated stick-breaking Dirichlet-process priors.

    The concentration alpha is fixed (no hyperprior); the reported cluster
    counts are the numbers of occupied components.
    """

    _variant = "dp"

    def __init__(self, n_burnin=20000, n_keep=10000, thin=2, seed=0,
                 alpha=1.0, truncation=50, psi_b=100.0,
                 psi_theta_prior="gamma(100,1)", proposal_sd_init=0.5,
                 adapt=True, center=False, hpd_level=0.68):
        self.n_burnin = n_burnin
        self.n_keep = n_keep
        self.thin = thin
        self.seed = seed
        self.alpha = alpha
        self.truncation = truncation
        self.psi_b = psi_b
        self.psi_theta_prior = psi_theta_prior
        self.proposal_sd_init = proposal_sd_init
        self.adapt = adapt
        self.center = center
        self.hpd_level = hpd_level

    def _chain_config(self) -> ChainConfig:
        return ChainConfig(
            variant="dp", n_burnin=self.n_burnin, n_keep=self.n_keep,
            thin=self.thin, seed=self.seed, alpha=self.alpha,
            truncation=self.truncation, psi_b=self.psi_b,
            psi_theta_prior=self.psi_theta_prior,
            proposal_sd_init=self.proposal_sd_init, adapt=self.adapt,
            center=self.center,
        )


class BayesianRasch(_RaschEstimatorBase):
    """Plain Bayesian Rasch model: one ability per subject, one difficulty
    per item, normal priors, no clustering."""

    _variant = "plain"

    def __init__(self, n_burnin=20000, n_keep=10000, thin=2, seed=0,
                 b_prior_sd=1.0, psi_prior="gamma(0.001,0.001)",
                 proposal_sd_init=0.5, adapt=True, hpd_level=0.68):
        self.n_burnin = n_burnin
        self.n_keep = n_keep
        self.thin = thin
        self.seed = seed
        self.b_prior_sd = b_prior_sd
        self.psi_prior = psi_prior
        self.proposal_sd_init = proposal_sd_init
        self.adapt = adapt
        self.hpd_level = hpd_level

    def _chain_config(self) -> ChainConfig:
        return ChainConfig(
            variant="plain", n_burnin=self.n_burnin, n_keep=self.n_keep,
            thin=self.thin, seed=self.seed, plain_b_sd=self.b_prior_sd,
            plain_psi_prior=self.psi_prior,
            proposal_sd_init=self.proposal_sd_init, adapt=self.adapt,
        )
