"""Replicate simulation studies: generate designs, fit variants, aggregate.

A study fixes one set of true parameters (drawn from ``base_seed``) and
generates ``n_replicates`` response matrices from it, one per replicate seed.
Design d1 assigns each ability and difficulty a value drawn uniformly from
the value set; design d2 additionally perturbs the values with normal noise
while the cluster memberships stay the pre-noise assignments. Keeping the
truth fixed across replicates is what makes the across-replicate deviation
summary (msd) measure sampling variability rather than truth variability.

Replicates are embarrassingly parallel; each carries its own derived seed so
reports are identical at any parallelism level.
"""

import json
from dataclasses import dataclass, field, replace, asdict

import numpy as np
from joblib import Parallel, delayed

from . import metrics
from .data import ResponseMatrix
from .diagnostics import comparison_report
from .errors import ConfigError, RaschClustError
from .model import rasch_prob
from .posterior import modal_k, point_partition
from .sampler import ChainConfig, run_chain

DESK_CHAIN = ChainConfig(
    variant="mfm",
    n_burnin=4000,
    n_keep=2000,
    thin=2,
    lambda_theta_prior="gamma(1,1)",
    lambda_b_prior="gamma(1,1)",
)

FULL_SCALE = {"n_subjects": 200, "n_items": 60, "n_replicates": 100,
              "n_burnin": 20000, "n_keep": 10000, "thin": 2}

_VARIANT_CODE = {"mfm": 1, "dp": 2, "plain": 3}


@dataclass(frozen=True)
class DesignSpec:
    """One simulation design: sizes, truth layout, replicate count, chain settings."""

    design: str = "d1"
    n_subjects: int = 100
    n_items: int = 30
    value_set: tuple = (-2.0, 0.0, 2.0)
    noise_sd: float = None
    n_replicates: int = 20
    base_seed: int = 0
    chain: ChainConfig = DESK_CHAIN

    def __post_init__(self):
        if self.design not in ("d1", "d2"):
            raise ConfigError(f"design must be d1 or d2, got {self.design!r}")
        if len(self.value_set) == 0:
            raise ConfigError("value_set must be nonempty")
        if self.noise_sd is None:
            object.__setattr__(self, "noise_sd", 0.5 if self.design == "d2" else 0.0)
        if self.noise_sd < 0:
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.n_replicates < 1 or self.n_subjects < 2 or self.n_items < 2:
            raise ConfigError("need n_replicates >= 1 and at least a 2x2 design")


def design_truth(spec: DesignSpec) -> dict:
    """The study's fixed truth: values, labels, pre-noise cluster values."""
    rng = np.random.default_rng([spec.base_seed, 1000003])
    values = np.asarray(spec.value_set, dtype=float)
    z_idx = rng.integers(0, len(values), size=spec.n_subjects)
    g_idx = rng.integers(0, len(values), size=spec.n_items)
    theta = values[z_idx] + spec.noise_sd * rng.standard_normal(spec.n_subjects)
    b = values[g_idx] + spec.noise_sd * rng.standard_normal(spec.n_items)
    return {
        "theta": theta,
        "b": b,
        "z_true": z_idx + 1,
        "g_true": g_idx + 1,
    }


def generate_replicate(spec: DesignSpec, r: int):
    """Responses for replicate r (truth shared across replicates).

    Returns (ResponseMatrix, truth) and is bit-identical for a given
    (base_seed, r).
    """
    if not 0 <= r < spec.n_replicates:
        raise ConfigError(f"replicate index {r} outside 0..{spec.n_replicates - 1}")
    truth = design_truth(spec)
    rng = np.random.default_rng([spec.base_seed, 2000003, r])
    p = rasch_prob(truth["theta"][:, None], truth["b"][None, :])
    responses = (rng.random(p.shape) < p).astype(int)
    return ResponseMatrix(responses), truth


def chain_seed(base_seed: int, r: int, variant: str) -> int:
    """Stable per-(replicate, variant) chain seed."""
    ss = np.random.SeedSequence([base_seed, r, _VARIANT_CODE[variant]])
    return int(ss.generate_state(1)[0])


def _fit_replicate(spec: DesignSpec, r: int, variants) -> dict:
    data, truth = generate_replicate(spec, r)
    results = {}
    for variant in variants:
        cfg = replace(spec.chain, variant=variant,
                      seed=chain_seed(spec.base_seed, r, variant))
        try:
            out = run_chain(data, cfg)
            rep = comparison_report(out, data)
            rm = metrics.ReplicateMetrics(
                p_d=rep.p_d, auc=rep.auc, time_seconds=out.wall_time_seconds)
            est = {"theta": out.theta_draws.mean(axis=0), "b": out.b_draws.mean(axis=0)}
            if variant == "mfm":
                for block, k_draws, label_draws, true_labels in (
                    ("theta", out.k_theta_draws, out.z_draws, truth["z_true"]),
                    ("b", out.k_b_draws, out.g_draws, truth["g_true"]),
                ):
                    rm.k_hat[block] = modal_k(k_draws)
                    part = point_partition(label_draws, k_draws)
                    rm.ri[block] = metrics.rand_index(true_labels, part)
                    for name, fn in (("precision", metrics.precision),
                                     ("recall", metrics.recall)):
                        try:
                            getattr(rm, name)[block] = fn(true_labels, part)
                        except RaschClustError:
                            getattr(rm, name)[block] = None
            results[variant] = {"metrics": rm, "estimates": est}
        except RaschClustError as exc:
            results[variant] = {"error": f"{type(exc).__name__}: {exc}"}
    return results


@dataclass
class StudyReport:
    """Per-replicate metrics plus their aggregates for each fitted variant."""

    design: dict
    variants: list
    truth: dict
    per_replicate: dict
    aggregates: dict
    k_frequency: dict
    failures: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing=False) -> dict:
        doc = asdict(self)
        if not include_timing:
            doc.pop("timing")
        return doc


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return (float(np.mean(vals)), len(values) - len(vals)) if vals else (None, len(values))


def run_study(spec: DesignSpec, variants=("mfm", "plain"), n_jobs=1) -> StudyReport:
    """Generate, fit and score every replicate; aggregate like the study tables."""
    variants = list(variants)
    for v in variants:
        if v not in _VARIANT_CODE:
            raise ConfigError(f"unknown variant {v!r}")
    raw = Parallel(n_jobs=n_jobs)(
        delayed(_fit_replicate)(spec, r, variants) for r in range(spec.n_replicates)
    )
    truth = design_truth(spec)
    per_replicate = {v: [] for v in variants}
    failures = []
    for r, rep in enumerate(raw):
        for v in variants:
            if "error" in rep[v]:
                failures.append({"replicate": r, "variant": v, "error": rep[v]["error"]})
            else:
                per_replicate[v].append({"replicate": r, **rep[v]})

    aggregates, k_frequency, timing = {}, {}, {}
    for v in variants:
        rows = per_replicate[v]
        agg = {}
        if rows:
            for block in ("theta", "b"):
                est = np.vstack([row["estimates"][block] for row in rows])
                agg[f"mab_{block}"] = metrics.mab(est, truth[block])
                agg[f"mmse_{block}"] = metrics.mmse(est, truth[block])
                agg[f"msd_{block}"] = metrics.msd(est) if est.shape[0] >= 2 else None
            agg["mpd"] = float(np.mean([row["metrics"].p_d for row in rows]))
            agg["mauc"] = float(np.mean([row["metrics"].auc for row in rows]))
            if v == "mfm":
                for block in ("theta", "b"):
                    agg[f"mri_{block}"] = float(
                        np.mean([row["metrics"].ri[block] for row in rows]))
                    for name in ("precision", "recall"):
                        mean, n_undef = _mean_or_none(
                            [row["metrics"].__getattribute__(name)[block] for row in rows])
                        agg[f"m{name}_{block}"] = mean
                        agg[f"m{name}_{block}_undefined"] = n_undef
                k_frequency[v] = {
                    block: _k_histogram([row["metrics"].k_hat[block] for row in rows])
                    for block in ("theta", "b")
                }
        timing[v] = {
            "mtime": float(np.mean([row["metrics"].time_seconds for row in rows]))
            if rows else None,
            "per_replicate": [row["metrics"].time_seconds for row in rows],
        }
        aggregates[v] = agg

    serializable = {
        v: [
            {
                "replicate": row["replicate"],
                "k_hat": row["metrics"].k_hat,
                "ri": row["metrics"].ri,
                "precision": row["metrics"].precision,
                "recall": row["metrics"].recall,
                "p_d": row["metrics"].p_d,
                "auc": row["metrics"].auc,
            }
            for row in per_replicate[v]
        ]
        for v in variants
    }
    return StudyReport(
        design={
            "design": spec.design,
            "n_subjects": spec.n_subjects,
            "n_items": spec.n_items,
            "value_set": list(spec.value_set),
            "noise_sd": spec.noise_sd,
            "n_replicates": spec.n_replicates,
            "base_seed": spec.base_seed,
        },
        variants=variants,
        truth={k: np.asarray(val).tolist() for k, val in truth.items()},
        per_replicate=serializable,
        aggregates=aggregates,
        k_frequency=k_frequency,
        failures=failures,
        timing=timing,
    )


def _k_histogram(k_values) -> dict:
    hist = {}
    for k in sorted(set(int(k) for k in k_values)):
        hist[str(k)] = int(sum(1 for x in k_values if int(x) == k))
    return hist


def write_study_outputs(report: StudyReport, outdir) -> None:
    """study_report.json plus the three CSV tables; timing goes to its own file."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "study_report.json", "w") as fh:
        json.dump(report.to_dict(include_timing=False), fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(outdir / "timing.json", "w") as fh:
        json.dump(report.timing, fh, sort_keys=True, indent=2)
        fh.write("\n")

    with open(outdir / "table_model.csv", "w") as fh:
        fh.write("variant,mpd,mauc\n")
        for v in report.variants:
            agg = report.aggregates[v]
            if agg:
                fh.write(f"{v},{agg['mpd']:.6f},{agg['mauc']:.6f}\n")
    with open(outdir / "table_estimation.csv", "w") as fh:
        fh.write("variant,block,mab,msd,mmse,mri,mprecision,mrecall\n")
        for v in report.variants:
            agg = report.aggregates[v]
            if not agg:
                continue
            for block in ("theta", "b"):
                cells = [
                    _fmt(agg.get(f"mab_{block}")), _fmt(agg.get(f"msd_{block}")),
                    _fmt(agg.get(f"mmse_{block}")), _fmt(agg.get(f"mri_{block}")),
                    _fmt(agg.get(f"mprecision_{block}")), _fmt(agg.get(f"mrecall_{block}")),
                ]
                fh.write(f"{v},{block}," + ",".join(cells) + "\n")
    with open(outdir / "k_frequency.csv", "w") as fh:
        fh.write("variant,block,k,count\n")
        for v, blocks in report.k_frequency.items():
            for block, hist in blocks.items():
                for k, count in hist.items():
                    fh.write(f"{v},{block},{k},{count}\n")


def _fmt(x):
    return "" if x is None else f"{x:.6f}"
