"""Command-line entry point: ``logcontrast {gen,fit,tune,bench}``.

Every subcommand also accepts ``--config FILE``, a flat JSON object whose
keys are flag names (dashes or underscores). Flags given on the command
line override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (METHODS, BenchConfig, SyntheticSpec, aee_curves, fit_method, generate_raw, run_replications,
                    write_aee_curve, write_metrics)
from .core import (PenaltySpec, feature_names, load_design, normalize_penalty_kind, partition, penalty_weights,
                   write_columns, write_dataset)
from .errors import (DomainError, LogContrastError, NumericalError, ParameterError, ShapeError, TopologyError,
                     TuningError, UsageError)
from .results import SolverConfig
from .tuning import select_lambda, write_path

log = logging.getLogger("logcontrast")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_DATA = 4
EXIT_TOPOLOGY = 5
EXIT_PARAMETER = 6
EXIT_NUMERICAL = 7
EXIT_TUNING = 8

# most specific first
EXIT_CODES = (
    (TopologyError, EXIT_TOPOLOGY),
    (UsageError, EXIT_USAGE),
    (FileNotFoundError, EXIT_MISSING_FILE),
    (DomainError, EXIT_BAD_DATA),
    (ShapeError, EXIT_BAD_DATA),
    (ParameterError, EXIT_PARAMETER),
    (NumericalError, EXIT_NUMERICAL),
    (TuningError, EXIT_TUNING),
)

DEFAULTS = {
    "method": "gcdmm", "penalty": "lasso", "K": 1, "rho": 1e-3, "rounds": 200, "sweeps": 20,
    "cd_tol": 1e-8, "outer_tol": 1e-7, "lambda": None, "tune_gic": False, "grid_size": 50, "seed": 0,
    "in": None, "out_dir": ".", "n": 20000, "p": 15, "q": 10, "sigma": 0.2, "case": 1, "noise_sd": 0.2,
    "reps": 20, "methods": list(METHODS), "penalties": ["adaptive-lasso"], "K_values": [10], "sigmas": [0.2],
    "full_scale": False, "aee_curve": False, "output": "last", "no_center": False,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _solver_flags(p, rho_default=1e-3):
    p.add_argument("--rho", type=float, help=f"augmented-Lagrangian penalty (default {rho_default:g})")
    p.add_argument("--rounds", "-L", type=int, help="communication rounds L")
    p.add_argument("--sweeps", "-B", type=int, help="coordinate-descent sweeps B per subproblem")
    p.add_argument("--cd-tol", type=float)
    p.add_argument("--outer-tol", type=float)


def _synthetic_flags(p):
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--case", type=int, choices=(1, 2), help="1: multivariate t3, 2: lognormal")
    p.add_argument("--noise-sd", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="logcontrast", description="Distributed sparse log-contrast regression.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat JSON file of flag values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", help="output directory (created if missing)")

    gen = sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    _synthetic_flags(gen)
    gen.add_argument("--sigma", type=float, help="correlation base of the compositional block")
    gen.add_argument("--K", type=int, help="recorded in the sidecar only")

    for name, helptext in (("fit", "fit one solver to a dataset"), ("tune", "GIC path on shard 1")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--in", dest="in", help="dataset CSV")
        sp.add_argument("--penalty", help="lasso, alasso or scad")
        sp.add_argument("--K", type=int, help="number of machines")
        sp.add_argument("--grid-size", "-S", type=int)
        sp.add_argument("--no-center", action="store_true", default=None)
        _solver_flags(sp)
        if name == "fit":
            sp.add_argument("--method", choices=METHODS)
            lam = sp.add_mutually_exclusive_group()
            lam.add_argument("--lambda", dest="lambda", type=float)
            lam.add_argument("--tune-gic", action="store_true", default=None)
            sp.add_argument("--output", choices=("last", "average"), help="dsgcdmm: reported machine vector")

    bench = sub.add_parser("bench", parents=[common], help="replicated synthetic benchmark")
    _synthetic_flags(bench)
    bench.add_argument("--sigma", dest="sigmas", type=float, nargs="+")
    bench.add_argument("--K", dest="K_values", type=int, nargs="+")
    bench.add_argument("--methods", nargs="+", choices=METHODS)
    bench.add_argument("--penalty", dest="penalties", nargs="+")
    bench.add_argument("--reps", type=int)
    bench.add_argument("--grid-size", "-S", type=int)
    bench.add_argument("--full-scale", action="store_true", default=None,
                       help="n = 200000, K in {10, 100, 200}, sigma in {0.2, 0.5}, 100 reps")
    bench.add_argument("--aee-curve", action="store_true", default=None,
                       help="also write AEE-vs-rounds data for the first sigma and K")
    _solver_flags(bench, rho_default=0.3)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "command", None) == "bench":
        opts["rho"] = 0.3
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError(f"config file {path} must hold a flat JSON object")
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if key not in opts:
                raise UsageError(f"unknown config key {key!r}")
            opts[key] = value
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config", "verbose"):
            opts[key] = value
    return opts


def _solver_config(o: dict, **over) -> SolverConfig:
    fields = dict(rho=float(o["rho"]), rounds=int(o["rounds"]), sweeps=int(o["sweeps"]),
                  cd_tol=float(o["cd_tol"]), outer_tol=float(o["outer_tol"]), seed=int(o["seed"]))
    fields.update(over)
    return SolverConfig(**fields)


def _out_dir(o: dict) -> Path:
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec(o: dict, sigma=None) -> SyntheticSpec:
    return SyntheticSpec(n=int(o["n"]), p=int(o["p"]), q=int(o["q"]), K=int(o.get("K") or 1),
                         sigma=float(o["sigma"] if sigma is None else sigma), v_case=int(o["case"]),
                         noise_sd=float(o["noise_sd"]), seed=int(o["seed"]))


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_gen(o: dict) -> dict:
    spec = _spec(o)
    X, V, y, truth = generate_raw(spec, np.random.default_rng(spec.seed))
    out = _out_dir(o)
    data = write_dataset(out / "data.csv", X, V, y,
                         extra={"truth": truth.tolist(), "spec": asdict(spec)})
    return {"dataset": str(data), "sidecar": str(data.with_suffix(".json"))}


def _load(o: dict):
    if not o["in"]:
        raise UsageError("--in is required")
    path = Path(o["in"])
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return load_design(path, center=not o["no_center"])


def _penalty(o: dict, shards, config: SolverConfig, n_total: int):
    """Penalty at the requested or GIC-selected lambda; adaptive weights come from shard 1."""
    kind = normalize_penalty_kind(o["penalty"])
    if o["tune_gic"] or o["lambda"] is None:
        tuned = select_lambda(shards[0], kind, config, S=int(o["grid_size"]), n_total=n_total)
        return tuned.penalty, tuned
    lam = float(o["lambda"])
    weights = None
    if kind == "adaptive-lasso":
        pilot = select_lambda(shards[0], "lasso", config, S=int(o["grid_size"]))
        weights = penalty_weights("adaptive-lasso", pilot.best.coef, n=n_total)
    return PenaltySpec(kind, lam, weights), None


def cmd_fit(o: dict) -> dict:
    design = _load(o)
    K = int(o["K"])
    config = _solver_config(o)
    if o["method"] == "dsgcdmm":
        from .dsgcdmm import ChainTopology
        ChainTopology(K)  # fail before any tuning work
    shards = partition(design, K)
    penalty, tuned = _penalty(o, shards, config, design.n)
    if o["method"] == "dsgcdmm" and o["output"] == "average":
        from .dsgcdmm import fit_dsgcdmm
        fit = fit_dsgcdmm(shards, penalty, config, output="average")
    else:
        fit = fit_method(o["method"], design, penalty, config, K)
    out = _out_dir(o)
    names = feature_names(design.p, design.q)
    write_columns(out / "estimate.csv", ["feature", "coef"],
                  [{"feature": f, "coef": float(c)} for f, c in zip(names, fit.coef)])
    rows = fit.trace_rows()
    cols = list(dict.fromkeys(k for r in rows for k in r))
    write_columns(out / "trace.csv", cols, rows)
    summary = {"method": fit.method, "penalty": penalty.kind, "lambda": penalty.lam, "K": K,
               "rho": config.rho, "converged": fit.converged, "rounds": fit.rounds, "sweeps": fit.sweeps,
               "messages": fit.messages, "scalars": fit.scalars,
               "support": [names[j] for j in fit.support],
               "zero_sum": float(design.C @ fit.coef),
               "final_residuals": {k: v for k, v in (rows[-1] if rows else {}).items()
                                   if "residual" in k or k.startswith("max_")}}
    if tuned is not None:
        write_path(tuned.path, out / "gic_path.csv")
    _write_json(out / "summary.json", summary)
    if not fit.converged:
        log.warning("solver stopped after %d rounds without meeting outer_tol", fit.rounds)
    return summary


def cmd_tune(o: dict) -> dict:
    design = _load(o)
    shards = partition(design, int(o["K"]))
    tuned = select_lambda(shards[0], o["penalty"], _solver_config(o), S=int(o["grid_size"]), n_total=design.n)
    out = _out_dir(o)
    write_path(tuned.path, out / "gic_path.csv")
    summary = {"lambda_opt": tuned.lambda_opt, "gic": tuned.best.gic, "df": tuned.best.df,
               "grid_min": tuned.grid.lam_min, "grid_max": tuned.grid.lam_max,
               "degenerate_grid": tuned.grid.degenerate}
    _write_json(out / "tune.json", summary)
    return summary


def cmd_bench(o: dict) -> dict:
    kw = dict(n=int(o["n"]), p=int(o["p"]), q=int(o["q"]), case=int(o["case"]), noise_sd=float(o["noise_sd"]),
              K_values=tuple(int(k) for k in o["K_values"]), sigmas=tuple(float(s) for s in o["sigmas"]),
              methods=tuple(o["methods"]), penalties=tuple(normalize_penalty_kind(p) for p in o["penalties"]),
              reps=int(o["reps"]), seed=int(o["seed"]), grid_size=int(o["grid_size"]),
              solver=_solver_config(o))
    if o["full_scale"]:
        for key in ("n", "K_values", "sigmas", "reps"):
            kw.pop(key)
        cfg = BenchConfig.full_scale(**kw)
    else:
        cfg = BenchConfig(**kw)
    result = run_replications(cfg)
    out = _out_dir(o)
    write_metrics(result.table, out / "metrics.csv")
    raw_cols = list(dict.fromkeys(k for r in result.raw for k in r))
    write_columns(out / "replications.csv", raw_cols, result.raw)
    summary = {"cells": len(result.table), "failures": len(result.errors), "metrics": str(out / "metrics.csv")}
    if o["aee_curve"]:
        spec = SyntheticSpec(n=cfg.n, p=cfg.p, q=cfg.q, K=cfg.K_values[0], sigma=cfg.sigmas[0], v_case=cfg.case,
                             noise_sd=cfg.noise_sd, seed=cfg.seed)
        curve_cfg = _solver_config(o, rounds=20, stop_early=False)
        rows = aee_curves(spec, cfg.penalties[0], curve_cfg, reps=cfg.reps, grid_size=cfg.grid_size)
        write_aee_curve(rows, out / "aee_curve.csv")
        summary["aee_curve"] = str(out / "aee_curve.csv")
    return summary


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "tune": cmd_tune, "bench": cmd_bench}


def exit_code(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return EXIT_INTERNAL


def run(argv=None) -> int:
    """Parse `argv`, run the subcommand and return the exit status.

    Failures print one JSON line ``{"error", "type", "exit_code"}`` on stderr.
    """
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if not args.command:
            raise UsageError("a subcommand is required: gen, fit, tune or bench")
        summary = COMMANDS[args.command](resolve_options(args))
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    except (LogContrastError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        code = exit_code(exc)
        print(json.dumps({"error": str(exc), "type": type(exc).__name__, "exit_code": code}), file=sys.stderr)
        return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
