"""Simultaneous clustering of item difficulties and person abilities in the
Rasch model, with full MCMC inference, model-comparison diagnostics and a
replicate simulation-study harness."""

from .data import ResponseMatrix, load_responses, save_responses, summarize, make_standin
from .diagnostics import ComparisonReport, auc, comparison_report, cpo, deviance, dic, lpml
from .errors import (
    ChainDivergedError,
    ConfigError,
    DataError,
    DegenerateChainError,
    DimensionError,
    MetricUndefinedError,
    RaschClustError,
)
from .estimators import BayesianRasch, DPRaschClustering, MFMRaschClustering
from .metrics import mab, mmse, msd, pair_confusion, precision, rand_index, recall
from .model import RaschParams, log_likelihood, rasch_prob, subject_likelihood
from .posterior import (
    FitSummary,
    cluster_estimates,
    cluster_proportions,
    hpd_interval,
    icc_curve,
    modal_k,
    point_partition,
    summarize_chain,
)
from .priors import (
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
from .sampler import ChainConfig, ChainOutput, PartitionState, run_chain, run_dp_chain
from .simstudy import DesignSpec, StudyReport, generate_replicate, run_study

__version__ = "0.1.0"

__all__ = [
    "BayesianRasch",
    "BaseMeasure",
    "ChainConfig",
    "ChainDivergedError",
    "ChainOutput",
    "ComparisonReport",
    "ConfigError",
    "DPRaschClustering",
    "DataError",
    "DegenerateChainError",
    "DesignSpec",
    "DimensionError",
    "DpConfig",
    "FitSummary",
    "HyperpriorSpec",
    "MFMRaschClustering",
    "MetricUndefinedError",
    "MfmConfig",
    "PartitionState",
    "RaschClustError",
    "RaschParams",
    "ResponseMatrix",
    "StudyReport",
    "auc",
    "cluster_estimates",
    "cluster_proportions",
    "comparison_report",
    "cpo",
    "deviance",
    "dic",
    "generate_replicate",
    "hpd_interval",
    "icc_curve",
    "load_responses",
    "log_k_pmf",
    "log_likelihood",
    "lpml",
    "mab",
    "make_standin",
    "mmse",
    "modal_k",
    "msd",
    "pair_confusion",
    "point_partition",
    "precision",
    "rand_index",
    "rasch_prob",
    "recall",
    "run_chain",
    "run_dp_chain",
    "run_study",
    "sample_dp_weights",
    "sample_hyperprior",
    "sample_mfm_weights",
    "sample_mfm_weights_general",
    "save_responses",
    "subject_likelihood",
    "summarize",
    "summarize_chain",
]
