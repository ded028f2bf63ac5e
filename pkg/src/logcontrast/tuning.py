"""Regularization grid and GIC-based choice of lambda on the first shard."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baseline import as_single, fit_gcdmm
from .core import PenaltySpec, Shard, normalize_penalty_kind, penalty_weights, write_columns
from .errors import ParameterError, TuningError, UsageError
from .results import SolverConfig


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray
    delta: float
    degenerate: bool = False

    @property
    def S(self) -> int:
        return len(self.values)

    @property
    def lam_min(self) -> float:
        return float(self.values[0])

    @property
    def lam_max(self) -> float:
        return float(self.values[-1])


def lambda_max(shard: Shard) -> float:
    """Smaller of ``max_j |2 pi_j'y / n|`` and ``max_j |2 pi_j'y / (sqrt(n) ||y||)|``."""
    inner = shard.Pi.T @ shard.y
    first = float(np.max(np.abs(2.0 * inner / shard.n)))
    ynorm = float(np.linalg.norm(shard.y))
    second = float(np.max(np.abs(2.0 * inner / (math.sqrt(shard.n) * ynorm)))) if ynorm > 0 else 0.0
    return min(first, second)


def lambda_grid(shard: Shard, S: int = 50, lam_min: Optional[float] = None,
                lam_max: Optional[float] = None) -> LambdaGrid:
    """Geometric grid from ``1/n_1`` to the data-driven upper end.

    Either endpoint can be forced. If the upper end does not exceed the
    lower one it is replaced by twice the lower one and the grid is flagged
    `degenerate`.
    """
    if S < 1:
        raise ParameterError(f"grid size must be positive, got {S}")
    lo = 1.0 / shard.n if lam_min is None else float(lam_min)
    hi = lambda_max(shard) if lam_max is None else float(lam_max)
    if not lo > 0:
        raise ParameterError("lambda_min must be positive")
    degenerate = not hi > lo
    if degenerate:
        warnings.warn(f"lambda_max={hi:g} does not exceed lambda_min={lo:g}; using 2*lambda_min", RuntimeWarning)
        hi = 2.0 * lo
    if S == 1:
        return LambdaGrid(np.array([hi]), 0.0, degenerate)
    delta = (math.log(hi) - math.log(lo)) / (S - 1)
    values = lo * np.exp(delta * np.arange(S))
    values[-1] = hi
    return LambdaGrid(values, delta, degenerate)


def degrees_of_freedom(coef) -> int:
    return max(2, int(np.count_nonzero(coef)))


def gic_value(rss_over_n: float, df: int, n: int, d: int) -> float:
    """``log(RSS/n) + (df - 1) (log log n / n) log(max(d, n))``."""
    if rss_over_n <= 0:
        return -math.inf
    return math.log(rss_over_n) + (df - 1) * math.log(math.log(n)) / n * math.log(max(d, n))


def gic(shard: Shard, coef, lam: Optional[float] = None) -> float:
    """Generalized information criterion of an estimate on one shard.

    Returns ``-inf`` (with a warning) for an exact fit.
    """
    coef = np.asarray(coef, dtype=float)
    r = shard.y - shard.Pi @ coef
    rss = float(r @ r) / shard.n
    if rss <= 0:
        warnings.warn("zero residual sum of squares: GIC is -inf", RuntimeWarning)
    return gic_value(rss, degrees_of_freedom(coef), shard.n, shard.d)


@dataclass
class PathPoint:
    lam: float
    gic: float
    df: int
    rss: float
    coef: np.ndarray
    converged: bool = True
    error: Optional[str] = None

    @property
    def support_hex(self) -> str:
        mask = 0
        for j in np.flatnonzero(self.coef):
            mask |= 1 << int(j)
        return hex(mask)


@dataclass
class TuningResult:
    lambda_opt: float
    path: list
    weights: np.ndarray
    grid: LambdaGrid
    penalty: PenaltySpec = field(default=None)

    def __iter__(self):
        yield self.lambda_opt
        yield self.path

    @property
    def best(self) -> PathPoint:
        return next(pt for pt in self.path if pt.lam == self.lambda_opt)


def select_lambda(shard, penalty_kind: str = "lasso", config: SolverConfig = SolverConfig(), *,
                  method: str = "gcdmm", grid: Optional[LambdaGrid] = None, S: int = 50,
                  weights=None, n_total: Optional[int] = None, scad_a: float = 3.7,
                  lla_rounds: int = 3) -> TuningResult:
    """Fit the path on one shard and pick the GIC minimizer.

    The path runs from the largest lambda down, each fit warm-started from
    the previous one. Ties go to the larger lambda. For the adaptive LASSO,
    missing `weights` are computed from a GIC-tuned LASSO pilot fit on the
    same shard, with offset ``1/n_total`` (default: the shard size).
    """
    if method not in ("gcdmm", "dscdmm"):
        raise UsageError(f"lambda is tuned with a single-machine solver, not {method!r}")
    single = as_single(shard)
    shard1 = single[0]
    kind = normalize_penalty_kind(penalty_kind)
    d = shard1.d
    if kind == "adaptive-lasso" and weights is None:
        pilot = select_lambda(shard1, "lasso", config, grid=grid, S=S)
        weights = penalty_weights("adaptive-lasso", pilot.best.coef, n=n_total or shard1.n)
    elif kind == "lasso" and weights is None:
        weights = np.ones(d)
    grid = grid if grid is not None else lambda_grid(shard1, S)
    base = PenaltySpec(kind, 0.0, None if kind == "scad" else weights, scad_a=scad_a, lla_rounds=lla_rounds)

    path = []
    state = None
    for lam in grid.values[::-1]:
        try:
            fit = fit_gcdmm(single, base.with_lambda(float(lam)), config, init=state)
        except Exception as exc:  # record and continue down the path
            path.append(PathPoint(float(lam), math.nan, 0, math.nan, np.zeros(d), False, str(exc)))
            continue
        state = fit.state
        r = shard1.y - shard1.Pi @ fit.coef
        rss = float(r @ r) / shard1.n
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            value = gic(shard1, fit.coef, lam)
        path.append(PathPoint(float(lam), value, degrees_of_freedom(fit.coef), rss, fit.coef, fit.converged))
    path.reverse()

    ok = [pt for pt in path if pt.error is None]
    if not ok:
        log = "; ".join(f"lambda={pt.lam:g}: {pt.error}" for pt in path)
        raise TuningError(f"every fit on the path failed: {log}")
    best = None
    for pt in reversed(ok):  # largest lambda first, strict improvement only
        if best is None or pt.gic < best.gic:
            best = pt
    return TuningResult(best.lam, path, np.asarray(weights if weights is not None else np.ones(d)), grid,
                        base.with_lambda(best.lam))


def write_path(path_points, filename):
    """Export the path as CSV: lambda, gic, df, rss, support bitmask (hex)."""
    rows = [{"lambda": pt.lam, "gic": pt.gic, "df": pt.df, "rss": pt.rss, "support": pt.support_hex,
             "converged": pt.converged} for pt in path_points]
    return write_columns(filename, ["lambda", "gic", "df", "rss", "support", "converged"], rows)
