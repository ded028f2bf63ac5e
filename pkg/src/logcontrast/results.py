"""Solver configuration, fit results and helpers shared by all solvers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .core import PenaltySpec, is_zero, penalty_weights
from .errors import ParameterError

THREADS_ENV = "LOGCONTRAST_THREADS"


@dataclass(frozen=True)
class SolverConfig:
    """Outer/inner iteration controls.

    Attributes
    ----------
    rho : float
        Augmented-Lagrangian penalty parameter.
    rounds : int
        Maximum number of communication rounds ``L``.
    sweeps : int
        Maximum number of coordinate-descent sweeps ``B`` per subproblem.
    cd_tol : float
        Inner stop: largest coordinate change within one sweep.
    outer_tol : float
        Outer stop: all primal and dual residuals (max-norm) below this.
    stop_early : bool
        Stop before ``rounds`` once `outer_tol` is met.
    history : bool
        Keep a copy of every round's primal and dual variables.
    """

    rho: float = 1e-3
    rounds: int = 200
    sweeps: int = 20
    cd_tol: float = 1e-8
    outer_tol: float = 1e-7
    seed: int = 0
    stop_early: bool = True
    history: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if self.rounds < 1 or self.sweeps < 1:
            raise ParameterError("rounds and sweeps must be at least 1")
        if not (self.cd_tol > 0 and self.outer_tol > 0):
            raise ParameterError("tolerances must be positive")


@dataclass
class FitResult:
    """Outcome of one solver run.

    `coef` is the reported estimate; `machine_coefs` holds every machine's
    final vector for distributed solvers. `trace` is a list of per-round
    records (plain dicts). `state` can be passed back as a warm start.
    """

    coef: np.ndarray
    method: str
    lam: float
    converged: bool
    rounds: int
    sweeps: int
    trace: list = field(default_factory=list)
    state: Any = None
    weights: Optional[np.ndarray] = None
    machine_coefs: Optional[np.ndarray] = None
    history: Optional[list] = None
    messages: int = 0
    scalars: int = 0
    zero_tol: Optional[float] = None

    @property
    def not_converged(self) -> bool:
        return not self.converged

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(~is_zero(self.coef, self.zero_tol))

    def final(self, key: str, default=np.nan):
        return self.trace[-1].get(key, default) if self.trace else default

    def trace_rows(self) -> list:
        """Flatten list-valued trace entries into indexed columns."""
        rows = []
        for rec in self.trace:
            row = {}
            for k, v in rec.items():
                if isinstance(v, (list, tuple, np.ndarray)):
                    for i, x in enumerate(v, start=1):
                        row[f"{k}_{i}"] = float(x)
                else:
                    row[k] = v
            rows.append(row)
        return rows


def run_lla(fit_once: Callable, penalty: PenaltySpec, d: int, reference: Callable) -> FitResult:
    """Local linear approximation loop for SCAD.

    ``fit_once(weights, warm_state)`` solves one weighted-L1 problem and
    ``reference(result)`` extracts the vector the next weights are built
    from. The first weights come from a zero reference, so they are all one.
    """
    if penalty.lam == 0:
        return fit_once(np.ones(d), None)
    ref = np.zeros(d)
    result = None
    total_sweeps = 0
    total_rounds = 0
    for _ in range(penalty.lla_rounds):
        w = penalty_weights("scad", ref, lam=penalty.lam, a=penalty.scad_a)
        result = fit_once(w, None if result is None else result.state)
        total_sweeps += result.sweeps
        total_rounds += result.rounds
        ref = reference(result)
    result.sweeps = total_sweeps
    result.rounds = total_rounds
    return result


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn: Callable, items, workers: Optional[int] = None) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; output order is input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
