"""Batch command-line front end.

Commands: simulate, fit, priorselect, study, diagnose. Every command is
deterministic given its seed (timing is written to a separate timing.json,
the one output that legitimately differs between reruns). Option values
resolve as: command-line flag > JSON config file (--config) > built-in
default. Each run writes a manifest.json with the fully resolved settings.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_responses, make_standin, save_responses, summarize
from .diagnostics import comparison_report, trace_export
from .errors import ChainDivergedError, ConfigError, DataError, RaschClustError
from .posterior import cluster_proportions, icc_curve, summarize_chain
from .sampler import ChainConfig, load_chain, run_chain, save_chain
from .simstudy import (
    DESK_CHAIN,
    DesignSpec,
    FULL_SCALE,
    generate_replicate,
    run_study,
    write_study_outputs,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

OUTDIR_ENV = "RASCHCLUST_OUTDIR"

ICC_GRID = np.round(np.arange(-4.0, 4.0 + 1e-9, 0.05), 10)

_FIT_DEFAULTS = {
    "variant": "mfm",
    "burnin": 20000,
    "keep": 10000,
    "thin": 2,
    "seed": 0,
    "gamma": 1.0,
    "lambda_theta_prior": "log_normal(0,1)",
    "lambda_b_prior": "log_normal(0,1)",
    "psi_b": 100.0,
    "psi_theta_prior": "gamma(100,1)",
    "alpha": 1.0,
    "truncation": 50,
    "b_prior_sd": 1.0,
    "psi_prior": "gamma(0.001,0.001)",
    "proposal_sd_init": 0.5,
    "adapt": True,
    "center": False,
    "hpd_level": 0.68,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_chain_options(p):
    p.add_argument("--variant", choices=("mfm", "dp", "plain"))
    p.add_argument("--burnin", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda-theta-prior", dest="lambda_theta_prior")
    p.add_argument("--lambda-b-prior", dest="lambda_b_prior")
    p.add_argument("--psi-b", dest="psi_b", type=float)
    p.add_argument("--psi-theta-prior", dest="psi_theta_prior")
    p.add_argument("--alpha", type=float)
    p.add_argument("--truncation", type=int)
    p.add_argument("--b-prior-sd", dest="b_prior_sd", type=float)
    p.add_argument("--psi-prior", dest="psi_prior")
    p.add_argument("--proposal-sd-init", dest="proposal_sd_init", type=float)
    p.add_argument("--adapt", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--center", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--hpd-level", dest="hpd_level", type=float)


def build_parser() -> _Parser:
    parser = _Parser(prog="raschclust", description=__doc__)
    parser.add_argument("--version", action="version", version=f"raschclust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a simulation-design or stand-in dataset")
    p.add_argument("--design", choices=("d1", "d2", "standin"))
    p.add_argument("--n", type=int, help="number of subjects")
    p.add_argument("--j", type=int, help="number of items")
    p.add_argument("--values", help="comma-separated cluster values, e.g. -2,0,2")
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicate", type=int)
    p.add_argument("--config")
    p.add_argument("--out")

    p = sub.add_parser("fit", help="run one chain on a dataset and summarize it")
    p.add_argument("--data", help="path to a response CSV or JSON file")
    p.add_argument("--config")
    p.add_argument("--out")
    _add_chain_options(p)

    p = sub.add_parser("priorselect", help="compare rate hyperpriors by DIC and LPML")
    p.add_argument("--data")
    p.add_argument("--priors", help="comma-separated prior specs")
    p.add_argument("--config")
    p.add_argument("--out")
    _add_chain_options(p)

    p = sub.add_parser("study", help="run a replicate simulation study")
    p.add_argument("--design", choices=("d1", "d2"))
    p.add_argument("--variants", help="comma-separated subset of mfm,plain,dp")
    p.add_argument("--replicates", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--j", type=int)
    p.add_argument("--values")
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--parallel", type=int)
    p.add_argument("--full-scale", dest="full_scale", action="store_true", default=None)
    p.add_argument("--config")
    p.add_argument("--out")
    _add_chain_options(p)

    p = sub.add_parser("diagnose", help="export a trace series and its autocorrelation")
    p.add_argument("--draws", help="draws directory written by fit")
    p.add_argument("--param", help="series selector, e.g. loglik, k_theta, theta:0")
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    return parser


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def _resolve(args, defaults: dict) -> dict:
    """flag > config-file value > default; rejects unknown config keys."""
    config = _load_config(getattr(args, "config", None))
    known = set(defaults) | {"data", "out", "draws"}
    unknown = set(config) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
        elif key in config:
            resolved[key] = config[key]
        else:
            resolved[key] = default
    return resolved


def _outdir(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get(OUTDIR_ENV)
    if not out:
        raise ConfigError(f"no output directory: pass --out or set {OUTDIR_ENV}")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(outdir, command, resolved) -> None:
    _write_json(outdir / "manifest.json", {
        "command": command,
        "config": resolved,
        "versions": {
            "raschclust": __version__,
            "python": ".".join(map(str, sys.version_info[:3])),
            "numpy": np.__version__,
        },
    })


def _chain_config(resolved) -> ChainConfig:
    return ChainConfig(
        variant=resolved["variant"],
        n_burnin=resolved["burnin"],
        n_keep=resolved["keep"],
        thin=resolved["thin"],
        seed=resolved["seed"],
        gamma=resolved["gamma"],
        lambda_theta_prior=resolved["lambda_theta_prior"],
        lambda_b_prior=resolved["lambda_b_prior"],
        psi_b=resolved["psi_b"],
        psi_theta_prior=resolved["psi_theta_prior"],
        alpha=resolved["alpha"],
        truncation=resolved["truncation"],
        plain_b_sd=resolved["b_prior_sd"],
        plain_psi_prior=resolved["psi_prior"],
        proposal_sd_init=resolved["proposal_sd_init"],
        adapt=resolved["adapt"],
        center=resolved["center"],
    )


def cmd_simulate(args) -> int:
    defaults = {"design": "d1", "n": 100, "j": 30, "values": "-2,0,2",
                "noise_sd": None, "seed": 0, "replicate": 0}
    resolved = _resolve(args, defaults)
    outdir = _outdir(args)
    if resolved["design"] == "standin":
        data, truth = make_standin(seed=resolved["seed"])
    else:
        values = tuple(float(v) for v in str(resolved["values"]).split(","))
        spec = DesignSpec(
            design=resolved["design"], n_subjects=resolved["n"], n_items=resolved["j"],
            value_set=values, noise_sd=resolved["noise_sd"],
            n_replicates=resolved["replicate"] + 1, base_seed=resolved["seed"],
        )
        data, truth = generate_replicate(spec, resolved["replicate"])
        truth = {k: np.asarray(v).tolist() for k, v in truth.items()}
    save_responses(data, outdir / "data.csv")
    _write_json(outdir / "truth.json", truth)
    _write_json(outdir / "data_summary.json", _jsonify(summarize(data)))
    _write_manifest(outdir, "simulate", resolved)
    return EXIT_OK


def _jsonify(doc):
    out = {}
    for k, v in doc.items():
        out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
    return out


def _require_data(resolved_path):
    if not resolved_path:
        raise ConfigError("missing --data")
    return load_responses(resolved_path)


def cmd_fit(args) -> int:
    resolved = _resolve(args, _FIT_DEFAULTS)
    data = _require_data(getattr(args, "data", None) or
                         _load_config(getattr(args, "config", None)).get("data"))
    outdir = _outdir(args)
    cfg = _chain_config(resolved)
    output = run_chain(data, cfg)
    save_chain(output, outdir / "draws")
    summary = summarize_chain(output, level=resolved["hpd_level"])
    summary.to_json(outdir / "fit_summary.json")
    report = comparison_report(output, data)
    report.to_json(outdir / "comparison.json")

    traces = outdir / "traces"
    traces.mkdir(exist_ok=True)
    selectors = ["loglik", "k_theta", "k_b", "psi_theta"]
    if cfg.variant == "mfm":
        selectors += ["lambda_theta", "lambda_b"]
    for sel in selectors:
        trace_export(output, sel, traces / f"{sel}_series.csv", traces / f"{sel}_acf.csv")

    if cfg.variant in ("mfm", "dp"):
        b_means = [c["mean"] for c in summary.cluster_estimates["b"]]
        curves = icc_curve(b_means, ICC_GRID)
        with open(outdir / "icc.csv", "w") as fh:
            fh.write("theta," + ",".join(f"b_cluster_{i+1}" for i in range(len(b_means))) + "\n")
            for g, row in zip(ICC_GRID, curves.T):
                fh.write(f"{g:.2f}," + ",".join(f"{v:.6f}" for v in row) + "\n")
        with open(outdir / "cluster_proportions.csv", "w") as fh:
            fh.write("block,cluster,count,proportion_correct\n")
            for block, part in (("theta", summary.partition_theta),
                                ("b", summary.partition_b)):
                for row in cluster_proportions(data, np.asarray(part)):
                    fh.write(f"{block},{row['cluster']},{row['count']},"
                             f"{row['proportion_correct']:.6f}\n")

    _write_json(outdir / "timing.json", {"wall_time_seconds": output.wall_time_seconds})
    _write_manifest(outdir, "fit", resolved)
    return EXIT_OK


def cmd_priorselect(args) -> int:
    defaults = dict(_FIT_DEFAULTS)
    defaults["priors"] = "gamma(1,1),uniform(0,1),log_normal(0,1)"
    defaults["variant"] = "mfm"
    resolved = _resolve(args, defaults)
    if resolved["variant"] != "mfm":
        raise ConfigError("priorselect compares rate priors of the mfm variant")
    priors = _split_prior_list(str(resolved["priors"]))
    if not priors:
        raise ConfigError("empty prior list")
    data = _require_data(getattr(args, "data", None) or
                         _load_config(getattr(args, "config", None)).get("data"))
    outdir = _outdir(args)

    rows = []
    timing = {}
    for prior in priors:
        cfg = _chain_config({**resolved, "lambda_theta_prior": prior,
                             "lambda_b_prior": prior})
        output = run_chain(data, cfg)
        report = comparison_report(output, data)
        rows.append({"prior": prior, "dic": report.dic, "lpml": report.lpml})
        timing[prior] = output.wall_time_seconds
    by_dic = min(rows, key=lambda r: r["dic"])["prior"]
    by_lpml = max(rows, key=lambda r: r["lpml"])["prior"]
    selection = {
        "by_dic": by_dic,
        "by_lpml": by_lpml,
        "agree": by_dic == by_lpml,
        "selected": by_dic if by_dic == by_lpml else None,
    }
    with open(outdir / "priorselect.csv", "w") as fh:
        fh.write("prior,dic,lpml\n")
        for row in rows:
            fh.write(f"\"{row['prior']}\",{row['dic']:.6f},{row['lpml']:.6f}\n")
    _write_json(outdir / "selection.json", selection)
    _write_json(outdir / "timing.json", timing)
    _write_manifest(outdir, "priorselect", {**resolved, "priors": priors})
    return EXIT_OK


def _split_prior_list(text) -> list:
    """Split "gamma(1,1),uniform(0,1)" at commas outside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur).strip())
    return [p for p in parts if p]


def cmd_study(args) -> int:
    defaults = {
        "design": "d1", "variants": "mfm,plain", "replicates": 20,
        "n": 100, "j": 30, "values": "-2,0,2", "noise_sd": None, "seed": 0,
        "parallel": 1, "full_scale": False,
        "burnin": DESK_CHAIN.n_burnin, "keep": DESK_CHAIN.n_keep,
        "thin": DESK_CHAIN.thin, "gamma": DESK_CHAIN.gamma,
        "lambda_theta_prior": DESK_CHAIN.lambda_theta_prior,
        "lambda_b_prior": DESK_CHAIN.lambda_b_prior,
        "psi_b": DESK_CHAIN.psi_b, "psi_theta_prior": DESK_CHAIN.psi_theta_prior,
        "alpha": 1.0, "truncation": 50,
        "b_prior_sd": 1.0, "psi_prior": "gamma(0.001,0.001)",
        "proposal_sd_init": DESK_CHAIN.proposal_sd_init,
        "adapt": True, "center": False, "hpd_level": 0.68, "variant": "mfm",
    }
    resolved = _resolve(args, defaults)
    if resolved["full_scale"]:
        resolved.update({"n": FULL_SCALE["n_subjects"], "j": FULL_SCALE["n_items"],
                         "replicates": FULL_SCALE["n_replicates"],
                         "burnin": FULL_SCALE["n_burnin"], "keep": FULL_SCALE["n_keep"],
                         "thin": FULL_SCALE["thin"]})
    variants = tuple(v.strip() for v in str(resolved["variants"]).split(",") if v.strip())
    values = tuple(float(v) for v in str(resolved["values"]).split(","))
    outdir = _outdir(args)
    chain = _chain_config(resolved)
    spec = DesignSpec(
        design=resolved["design"], n_subjects=resolved["n"], n_items=resolved["j"],
        value_set=values, noise_sd=resolved["noise_sd"],
        n_replicates=resolved["replicates"], base_seed=resolved["seed"], chain=chain,
    )
    report = run_study(spec, variants=variants, n_jobs=resolved["parallel"])
    write_study_outputs(report, outdir)
    _write_manifest(outdir, "study", {**resolved, "variants": list(variants)})
    return EXIT_OK


def cmd_diagnose(args) -> int:
    defaults = {"param": "loglik", "max_lag": 50}
    resolved = _resolve(args, defaults)
    draws_dir = getattr(args, "draws", None) or \
        _load_config(getattr(args, "config", None)).get("draws")
    if not draws_dir:
        raise ConfigError("missing --draws directory")
    if not Path(draws_dir).is_dir():
        raise DataError(f"draws directory {draws_dir} does not exist")
    outdir = _outdir(args)
    output = load_chain(draws_dir)
    sel = resolved["param"]
    try:
        trace_export(output, sel, outdir / f"{_safe_name(sel)}_series.csv",
                     outdir / f"{_safe_name(sel)}_acf.csv", max_lag=resolved["max_lag"])
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    _write_manifest(outdir, "diagnose", resolved)
    return EXIT_OK


def _safe_name(selector) -> str:
    return selector.replace(":", "_")


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "priorselect": cmd_priorselect,
    "study": cmd_study,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"raschclust: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"raschclust: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ChainDivergedError, FloatingPointError) as exc:
        print(f"raschclust: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RaschClustError as exc:
        print(f"raschclust: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
