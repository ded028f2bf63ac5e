"""
Synthetic benchmark: data generation, selection metrics, CV loss and the
replication harness that produces FP/FN/AEE tables and AEE-vs-rounds data.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .baseline import fit_acdmm, fit_gcdmm
from .core import (EPS_ZERO, LogContrastDesign, PenaltySpec, build_design, is_zero, normalize_penalty_kind,
                   partition, write_columns)
from .dscdmm import fit_dscdmm
from .dsgcdmm import fit_dsgcdmm
from .errors import ParameterError, ShapeError
from .results import FitResult, SolverConfig, ordered_map
from .tuning import select_lambda

log = logging.getLogger(__name__)

METHODS = ("dsgcdmm", "dscdmm", "gcdmm", "acdmm")
METHOD_LABELS = {"dsgcdmm": "DSGC", "dscdmm": "DSC", "gcdmm": "GC", "acdmm": "AC"}
PENALTY_LABELS = {"lasso": "L", "adaptive-lasso": "AL", "scad": "S"}

BETA0 = (1.0, -0.8, 0.6, 0.0, 0.0, -1.5, -0.5, 1.2)
THETA0 = (0.7, -1.5, 1.0, 0.0, 0.0, 0.0, -0.8, 2.3)

V_CASES = {1: "heavy_tailed_t3", 2: "right_skewed_lognormal",
           "1": "heavy_tailed_t3", "2": "right_skewed_lognormal",
           "heavy_tailed_t3": "heavy_tailed_t3", "right_skewed_lognormal": "right_skewed_lognormal"}


def default_truth(p: int, q: int) -> np.ndarray:
    if p < 8 or q < 8:
        raise ParameterError(f"the default coefficients need p >= 8 and q >= 8, got p={p}, q={q}")
    return np.concatenate([BETA0, np.zeros(p - 8), THETA0, np.zeros(q - 8)])


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 20000
    p: int = 15
    q: int = 10
    K: int = 10
    sigma: float = 0.2
    v_case: object = "heavy_tailed_t3"
    noise_sd: float = 0.2
    seed: int = 0
    true_zeta: Optional[tuple] = None
    center: bool = True

    def truth(self) -> np.ndarray:
        if self.true_zeta is None:
            return default_truth(self.p, self.q)
        z = np.asarray(self.true_zeta, dtype=float)
        if z.shape != (self.p + self.q,):
            raise ShapeError(f"true_zeta has length {z.size}, expected {self.p + self.q}")
        return z


def composition_mean(p: int) -> np.ndarray:
    nu = np.zeros(p)
    nu[:5] = math.log(0.2 * p)
    return nu


def toeplitz_power(base: float, size: int) -> np.ndarray:
    idx = np.arange(size)
    return base ** np.abs(np.subtract.outer(idx, idx))


def generate_raw(spec: SyntheticSpec, rng=None):
    """Draw ``(X, V, y)`` and the true coefficients."""
    if spec.n < 1 or spec.p < 2 or spec.q < 0:
        raise ParameterError(f"invalid dimensions n={spec.n}, p={spec.p}, q={spec.q}")
    case = V_CASES.get(spec.v_case)
    if case is None:
        raise ParameterError(f"unknown covariate case {spec.v_case!r}")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    truth = spec.truth()
    n, p, q = spec.n, spec.p, spec.q

    delta = rng.multivariate_normal(composition_mean(p), toeplitz_power(spec.sigma, p), size=n)
    delta -= delta.max(axis=1, keepdims=True)
    X = np.exp(delta)
    X /= X.sum(axis=1, keepdims=True)

    if case == "heavy_tailed_t3":
        xi = np.full((q, q), 0.5)
        np.fill_diagonal(xi, 1.0)
        normal = rng.multivariate_normal(np.zeros(q), xi, size=n)
        V = normal * np.sqrt(3.0 / rng.chisquare(3, size=n))[:, None]
    else:
        V = np.exp(rng.multivariate_normal(np.zeros(q), toeplitz_power(0.5, q), size=n))

    y = np.hstack([np.log(X), V]) @ truth + rng.normal(0.0, spec.noise_sd, size=n)
    return X, V, y, truth


def generate_synthetic(spec: SyntheticSpec, rng=None):
    """Design (centered per ``spec.center``) and true coefficients."""
    X, V, y, truth = generate_raw(spec, rng)
    return build_design(X, V, y, center=spec.center), truth


@dataclass
class MetricsRow:
    method: str
    penalty: str
    K: int
    sigma: float
    aee: float = math.nan
    fp: int = 0
    fn: int = 0
    fp_c: int = 0
    fp_nc: int = 0
    fn_c: int = 0
    fn_nc: int = 0
    runtime: float = 0.0
    rounds: int = 0
    converged: bool = True


def selection_metrics(estimate, truth, p: int, eps: Optional[float] = None) -> dict:
    """False positives/negatives overall and split into compositional (first `p`) and the rest.

    Zeros are exact unless `eps` is given.
    """
    est = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ShapeError(f"estimate has shape {est.shape}, truth has shape {truth.shape}")
    est_nz = ~is_zero(est, eps)
    true_nz = truth != 0
    fp = est_nz & ~true_nz
    fn = ~est_nz & true_nz
    comp = np.arange(est.size) < p
    return {"fp": int(fp.sum()), "fn": int(fn.sum()),
            "fp_c": int((fp & comp).sum()), "fp_nc": int((fp & ~comp).sum()),
            "fn_c": int((fn & comp).sum()), "fn_nc": int((fn & ~comp).sum()),
            "aee": float(np.linalg.norm(est - truth))}


def method_label(method: str, penalty: str) -> str:
    return f"{METHOD_LABELS[method]}-{PENALTY_LABELS[normalize_penalty_kind(penalty)]}"


def fit_method(method: str, design: LogContrastDesign, penalty: PenaltySpec, config: SolverConfig,
               K: int = 1) -> FitResult:
    """Dispatch on a method tag; distributed methods shard `design` into `K` blocks."""
    method = method.lower()
    if method == "gcdmm":
        return fit_gcdmm(design, penalty, config)
    shards = partition(design, K)
    if method == "acdmm":
        return fit_acdmm(shards, penalty, config)
    if method == "dscdmm":
        return fit_dscdmm(shards, penalty, config)
    if method == "dsgcdmm":
        return fit_dsgcdmm(shards, penalty, config)
    raise ParameterError(f"unknown method {method!r}; expected one of {METHODS}")


def cv_fold_residuals(design: LogContrastDesign, method: str, penalty: PenaltySpec, config: SolverConfig,
                      folds: int = 5, K: int = 1) -> list:
    """Validation residual vectors of contiguous-block cross-validation."""
    if folds < 2:
        raise ParameterError(f"need at least 2 folds, got {folds}")
    n = design.n
    bounds = np.linspace(0, n, folds + 1).astype(int)
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo < design.d:
            warnings.warn(f"validation fold of {hi - lo} rows is smaller than d={design.d}", RuntimeWarning)
        train = np.r_[0:lo, hi:n]
        fit = fit_method(method, design.rows(train), penalty, config, K)
        out.append(design.y[lo:hi] - design.Pi[lo:hi] @ fit.coef)
    return out


def cv_loss(design: LogContrastDesign, method: str, penalty: PenaltySpec, config: SolverConfig,
            q_norm=2, folds: int = 5, K: int = 1) -> float:
    """Mean over folds of ``||y_v - Pi_v zeta_hat||_q / n_v``."""
    order = {1: 1, 2: 2, "1": 1, "2": 2, "inf": np.inf, "∞": np.inf}.get(q_norm, q_norm)
    if order not in (1, 2, np.inf):
        raise ParameterError(f"q_norm must be 1, 2 or inf, got {q_norm!r}")
    res = cv_fold_residuals(design, method, penalty, config, folds, K)
    return float(np.mean([np.linalg.norm(r, ord=order) / r.size for r in res]))


@dataclass(frozen=True)
class BenchConfig:
    """Grid of cells (sigma x K x penalty) and the methods fitted in each."""

    n: int = 20000
    p: int = 15
    q: int = 10
    case: object = 1
    noise_sd: float = 0.2
    K_values: Sequence[int] = (10,)
    sigmas: Sequence[float] = (0.2,)
    methods: Sequence[str] = METHODS
    penalties: Sequence[str] = ("adaptive-lasso",)
    reps: int = 20
    seed: int = 0
    grid_size: int = 50
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(rho=0.3, rounds=300, sweeps=20))
    tune_solver: Optional[SolverConfig] = None
    workers: Optional[int] = None

    @classmethod
    def full_scale(cls, **kw) -> "BenchConfig":
        base = dict(n=200000, K_values=(10, 100, 200), sigmas=(0.2, 0.5), reps=100)
        base.update(kw)
        return cls(**base)


def replication_seed(seed: int, rep: int, sigma: float) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(rep), int(round(sigma * 1e6))])


def run_cell_rep(cfg: BenchConfig, sigma: float, K: int, penalty_kind: str, rep: int) -> list:
    """One replication of one cell: data, tuning on shard 1, every method at the same lambda."""
    kind = normalize_penalty_kind(penalty_kind)
    spec = SyntheticSpec(n=cfg.n, p=cfg.p, q=cfg.q, K=K, sigma=sigma, v_case=cfg.case,
                         noise_sd=cfg.noise_sd)
    design, truth = generate_synthetic(spec, np.random.default_rng(replication_seed(cfg.seed, rep, sigma)))
    shards = partition(design, K)
    tuned = select_lambda(shards[0], kind, cfg.tune_solver or cfg.solver, S=cfg.grid_size, n_total=design.n)
    penalty = tuned.penalty
    rows = []
    for method in sorted(cfg.methods, key=METHODS.index):
        row = MetricsRow(method=method, penalty=kind, K=K, sigma=sigma)
        t0 = time.perf_counter()
        fit = fit_method(method, design, penalty, cfg.solver, K)
        row.runtime = time.perf_counter() - t0
        m = selection_metrics(fit.coef, truth, cfg.p, fit.zero_tol)
        for key, val in m.items():
            setattr(row, key, val)
        row.rounds, row.converged = fit.rounds, fit.converged
        rows.append(asdict(row) | {"rep": rep, "lambda": tuned.lambda_opt})
    return rows


METRIC_FIELDS = ("aee", "fp", "fn", "fp_c", "fp_nc", "fn_c", "fn_nc", "runtime", "rounds")


def aggregate(rows: list, reps: int) -> list:
    """Mean and standard error of every metric per (method, penalty, K, sigma)."""
    cells = {}
    for r in rows:
        if "error" in r:
            continue
        cells.setdefault((r["sigma"], r["K"], r["penalty"], r["method"]), []).append(r)
    out = []
    for (sigma, K, penalty, method), group in sorted(
            cells.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], METHODS.index(kv[0][3]))):
        agg = {"sigma": sigma, "K": K, "penalty": penalty, "method": method,
               "label": method_label(method, penalty), "reps": len(group),
               "failures": reps - len(group),
               "not_converged": sum(not g["converged"] for g in group)}
        for f in METRIC_FIELDS:
            vals = np.array([g[f] for g in group], dtype=float)
            agg[f"{f}_mean"] = float(vals.mean())
            agg[f"{f}_se"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        agg["any_error_reps"] = sum((g["fp"] + g["fn"]) > 0 for g in group)
        out.append(agg)
    return out


@dataclass
class BenchResult:
    table: list
    raw: list
    errors: list

    def row(self, method: str, **match) -> dict:
        for r in self.table:
            if r["method"] == method and all(r[k] == v for k, v in match.items()):
                return r
        raise KeyError(method)


def run_replications(cfg: BenchConfig) -> BenchResult:
    """Run every (sigma, K, penalty) cell for ``cfg.reps`` replications.

    A failing replication is recorded against its cell and does not stop
    the run.
    """
    jobs = [(sigma, K, pen, rep) for sigma in cfg.sigmas for K in cfg.K_values
            for pen in cfg.penalties for rep in range(cfg.reps)]

    def job(args):
        sigma, K, pen, rep = args
        try:
            return run_cell_rep(cfg, sigma, K, pen, rep)
        except Exception as exc:
            log.warning("cell sigma=%s K=%s penalty=%s rep=%s failed: %s", sigma, K, pen, rep, exc)
            return [{"sigma": sigma, "K": K, "penalty": normalize_penalty_kind(pen), "rep": rep,
                     "error": f"{type(exc).__name__}: {exc}"}]

    raw = [r for rows in ordered_map(job, jobs, cfg.workers) for r in rows]
    errors = [r for r in raw if "error" in r]
    return BenchResult(aggregate(raw, cfg.reps), raw, errors)


TABLE_COLUMNS = (["sigma", "K", "penalty", "method", "label", "reps", "failures", "not_converged",
                  "any_error_reps"] + [f"{f}_{s}" for f in METRIC_FIELDS for s in ("mean", "se")])


def write_metrics(table: list, filename):
    return write_columns(filename, TABLE_COLUMNS, table)


def aee_curve(design: LogContrastDesign, truth, penalty: PenaltySpec, config: SolverConfig, K: int,
              L_values=(1, 2, 5, 10, 20), B_values=(5, 10, 20)) -> list:
    """AEE of the chain solver's reported estimate after L rounds, for each sweep cap B.

    Each row also carries the AEE of the pooled single-machine fit.
    """
    shards = partition(design, K)
    truth = np.asarray(truth, dtype=float)
    gc = fit_gcdmm(design, penalty, config)
    gc_aee = float(np.linalg.norm(gc.coef - truth))
    L_max = max(L_values)
    rows = []
    for B in B_values:
        cfg = replace(config, rounds=L_max, sweeps=B, history=True, stop_early=False)
        fit = fit_dsgcdmm(shards, penalty, cfg)
        for L in L_values:
            est = fit.history[L - 1].zetas[-1]
            rows.append({"L": L, "B": B, "aee": float(np.linalg.norm(est - truth)), "gc_aee": gc_aee})
    return rows


def aee_curves(spec: SyntheticSpec, penalty_kind: str, config: SolverConfig, reps: int = 20,
               L_values=(1, 2, 5, 10, 20), B_values=(5, 10, 20), tune_config: Optional[SolverConfig] = None,
               grid_size: int = 50) -> list:
    """Replication-averaged AEE-vs-L rows; lambda is tuned on shard 1 in every replication."""
    acc = {}
    for rep in range(reps):
        design, truth = generate_synthetic(spec, np.random.default_rng(replication_seed(spec.seed, rep, spec.sigma)))
        shards = partition(design, spec.K)
        tuned = select_lambda(shards[0], penalty_kind, tune_config or config, S=grid_size, n_total=design.n)
        for row in aee_curve(design, truth, tuned.penalty, config, spec.K, L_values, B_values):
            key = (row["L"], row["B"])
            prev = acc.get(key, (0.0, 0.0))
            acc[key] = (prev[0] + row["aee"], prev[1] + row["gc_aee"])
    return [{"L": L, "B": B, "aee": acc[(L, B)][0] / reps, "gc_aee": acc[(L, B)][1] / reps}
            for B in B_values for L in L_values]


def write_aee_curve(rows: list, filename):
    return write_columns(filename, ["L", "B", "aee", "gc_aee"], rows)


__all__ = ["SyntheticSpec", "generate_synthetic", "generate_raw", "selection_metrics", "MetricsRow",
           "cv_loss", "cv_fold_residuals", "BenchConfig", "run_replications", "aee_curve", "aee_curves",
           "fit_method", "write_metrics", "write_aee_curve", "BenchResult", "METHODS",
           "EPS_ZERO"]
