"""
Data model for zero-sum constrained log-contrast regression.

The regression problem is

    minimize  (1/2n) ||y - Pi zeta||^2 + lam * sum_j w_j |zeta_j|
    subject to  C' zeta = 0

where ``Pi = (log X, V)`` stacks the log-transformed compositional block
and the non-compositional block, and ``C = (1_p, 0_q)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ParameterError, ShapeError, SimplexError, UsageError

SIMPLEX_TOL = 1e-8
EPS_ZERO = 1e-8
SCAD_A = 3.7

PENALTY_KINDS = ("lasso", "adaptive-lasso", "scad")
_PENALTY_ALIASES = {"alasso": "adaptive-lasso", "al": "adaptive-lasso", "s": "scad"}


def normalize_penalty_kind(kind: str) -> str:
    kind = _PENALTY_ALIASES.get(kind.lower(), kind.lower())
    if kind not in PENALTY_KINDS:
        raise ParameterError(f"unknown penalty kind {kind!r}; expected one of {PENALTY_KINDS}")
    return kind


def check_composition(X, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate that every row of `X` lies in the open simplex.

    Returns the matrix as a float array. Raises :class:`DomainError` naming
    the first nonpositive entry and :class:`SimplexError` naming the first
    row whose sum is off by more than `tol`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"composition matrix must be 2-D, got shape {X.shape}")
    bad = np.argwhere(~(X > 0))
    if bad.size:
        i, j = bad[0]
        raise DomainError(f"nonpositive compositional entry {X[i, j]!r} at row {i}, column {j}")
    dev = np.abs(X.sum(axis=1) - 1.0)
    rows = np.flatnonzero(dev > tol)
    if rows.size:
        i = rows[0]
        raise SimplexError(f"row {i} sums to {X[i].sum()!r}, not 1 (tolerance {tol:g})")
    return X


def constraint_vector(p: int, q: int) -> np.ndarray:
    return np.concatenate([np.ones(p), np.zeros(q)])


@dataclass(frozen=True)
class LogContrastDesign:
    """Response, log-composition block, covariate block and constraint.

    ``Pi`` is the (possibly centered) regression matrix actually used by the
    solvers; ``Z`` is always the raw elementwise log of the composition.
    """

    y: np.ndarray
    Z: np.ndarray
    V: np.ndarray
    Pi: np.ndarray
    C: np.ndarray
    centered: bool = False
    y_mean: float = 0.0
    Pi_means: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.Pi.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def q(self) -> int:
        return self.V.shape[1]

    @property
    def d(self) -> int:
        return self.Pi.shape[1]

    def rows(self, index) -> "LogContrastDesign":
        """Sub-design restricted to the given rows, keeping the centering record."""
        return replace(self, y=self.y[index], Z=self.Z[index], V=self.V[index], Pi=self.Pi[index])


def build_design(X, V=None, y=None, center: bool = False, tol: float = SIMPLEX_TOL) -> LogContrastDesign:
    """Assemble ``Pi = (log X, V)`` and ``C = (1_p, 0_q)``.

    If `center` is set, `y` and every column of ``Pi`` have their
    full-sample means removed; the means are kept on the result.
    """
    X = check_composition(X, tol)
    n, p = X.shape
    V = np.zeros((n, 0)) if V is None else np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if y is None:
        raise UsageError("response vector y is required")
    y = np.asarray(y, dtype=float).ravel()
    if V.shape[0] != n or y.shape[0] != n:
        raise ShapeError(f"row counts differ: X has {n}, V has {V.shape[0]}, y has {y.shape[0]}")
    Z = np.log(X)
    Pi = np.hstack([Z, V])
    C = constraint_vector(p, V.shape[1])
    if not center:
        return LogContrastDesign(y=y, Z=Z, V=V, Pi=Pi, C=C)
    y_mean = float(y.mean())
    Pi_means = Pi.mean(axis=0)
    return LogContrastDesign(y=y - y_mean, Z=Z, V=V, Pi=Pi - Pi_means, C=C,
                             centered=True, y_mean=y_mean, Pi_means=Pi_means)


def soft_threshold(u, t):
    """``sgn(u) * max(|u| - t, 0)``; works elementwise on arrays."""
    if np.ndim(u) == 0 and np.ndim(t) == 0:
        if t < 0:
            raise ParameterError("threshold must be nonnegative")
        if u > t:
            return u - t
        if u < -t:
            return u + t
        return 0.0
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def scad_derivative(u, lam: float, a: float = SCAD_A):
    """Derivative of the SCAD penalty at ``u >= 0``.

    Returns ``lam`` for ``u <= lam`` and ``(a lam - u)_+ / (a - 1)`` beyond.
    """
    if a <= 2:
        raise ParameterError(f"SCAD shape parameter must exceed 2, got {a}")
    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    u = np.abs(np.asarray(u, dtype=float))
    out = np.where(u <= lam, lam, np.maximum(a * lam - u, 0.0) / (a - 1.0))
    return float(out) if out.ndim == 0 else out


def penalty_weights(kind: str, reference=None, *, n: Optional[int] = None, lam: Optional[float] = None,
                    a: float = SCAD_A, d: Optional[int] = None) -> np.ndarray:
    """Weight vector for the weighted-L1 penalty.

    Parameters
    ----------
    kind : {'lasso', 'adaptive-lasso', 'scad'}
    reference : array_like, optional
        Pilot LASSO estimate (adaptive LASSO) or current LLA iterate (SCAD).
    n : int, optional
        Sample size entering the adaptive-LASSO offset ``1/n``.
    lam : float, optional
        Regularization level; SCAD weights are ``p'_lam(|ref|) / lam``.
    a : float
        SCAD shape parameter.
    d : int, optional
        Length of the LASSO weight vector when no reference is given.
    """
    kind = normalize_penalty_kind(kind)
    if kind == "lasso":
        if d is None:
            if reference is None:
                raise UsageError("lasso weights need either d or a reference vector")
            d = len(reference)
        return np.ones(d)
    if reference is None:
        raise UsageError(f"{kind} weights need a reference estimate")
    ref = np.abs(np.asarray(reference, dtype=float))
    if kind == "adaptive-lasso":
        if n is None or n <= 0:
            raise UsageError("adaptive-lasso weights need a positive sample size n")
        return 1.0 / (ref + 1.0 / n)
    if lam is None or lam <= 0:
        raise ParameterError("scad weights divide by lambda, which must be positive")
    return scad_derivative(ref, lam, a) / lam


@dataclass(frozen=True)
class PenaltySpec:
    """Weighted-L1 penalty: kind, level, weights and SCAD settings.

    For ``kind='scad'`` the weights are produced by the LLA loop inside the
    solvers and `weights` is ignored.
    """

    kind: str = "lasso"
    lam: float = 0.0
    weights: Optional[np.ndarray] = None
    scad_a: float = SCAD_A
    lla_rounds: int = 3

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_penalty_kind(self.kind))
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be nonnegative, got {self.lam}")
        if self.scad_a <= 2:
            raise ParameterError(f"SCAD shape parameter must exceed 2, got {self.scad_a}")
        if self.lla_rounds < 1:
            raise ParameterError("lla_rounds must be a positive integer")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ParameterError("penalty weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    def resolve_weights(self, d: int) -> np.ndarray:
        """Fixed weight vector for the LASSO family (all ones if unset)."""
        if self.weights is None:
            if self.kind == "adaptive-lasso":
                raise UsageError("adaptive-lasso penalty needs precomputed weights")
            return np.ones(d)
        if self.weights.shape != (d,):
            raise ShapeError(f"weights have shape {self.weights.shape}, expected ({d},)")
        return self.weights

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class Shard:
    """Rows held by one machine, with cached sufficient statistics."""

    y: np.ndarray
    Pi: np.ndarray
    C: np.ndarray
    index: int = 0

    @property
    def n(self) -> int:
        return self.Pi.shape[0]

    @property
    def d(self) -> int:
        return self.Pi.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        return self.Pi.T @ self.Pi / self.n

    @cached_property
    def moment(self) -> np.ndarray:
        return self.Pi.T @ self.y / self.n

    @cached_property
    def yy(self) -> float:
        return float(self.y @ self.y) / self.n

    def loss(self, zeta) -> float:
        """``(1/2 n_k) ||y_k - Pi_k zeta||^2``."""
        r = self.y - self.Pi @ zeta
        return 0.5 * float(r @ r) / self.n


@dataclass(frozen=True)
class ShardedDataset:
    """Contiguous row blocks of one design, one per machine."""

    shards: tuple
    C: np.ndarray
    p: int
    q: int
    n: int = field(default=0)

    @property
    def K(self) -> int:
        return len(self.shards)

    @property
    def d(self) -> int:
        return self.p + self.q

    @property
    def sizes(self) -> tuple:
        return tuple(s.n for s in self.shards)

    def __iter__(self):
        return iter(self.shards)

    def __getitem__(self, k) -> Shard:
        return self.shards[k]

    def pooled(self) -> Shard:
        return Shard(y=np.concatenate([s.y for s in self.shards]),
                     Pi=np.vstack([s.Pi for s in self.shards]), C=self.C)


def partition(design: LogContrastDesign, K: int) -> ShardedDataset:
    """Split rows into `K` contiguous shards of ``floor(n/K)`` rows.

    The last shard absorbs the ``n mod K`` leftover rows.
    """
    n = design.n
    if not isinstance(K, (int, np.integer)) or K <= 0 or K > n:
        raise ParameterError(f"machine count must satisfy 1 <= K <= n={n}, got {K}")
    K = int(K)
    size = n // K
    bounds = [k * size for k in range(K)] + [n]
    shards = tuple(
        Shard(y=design.y[lo:hi], Pi=design.Pi[lo:hi], C=design.C, index=k)
        for k, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]))
    )
    return ShardedDataset(shards=shards, C=design.C, p=design.p, q=design.q, n=n)


def is_zero(coef, eps: Optional[float] = None) -> np.ndarray:
    """Zero pattern of an estimate; exact unless `eps` is given."""
    coef = np.asarray(coef)
    return coef == 0 if eps is None else np.abs(coef) <= eps


# CSV dataset format: header y, x1..xp, v1..vq, plus a JSON sidecar.

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(path, X, V, y, extra: Optional[dict] = None) -> Path:
    """Write ``y, x1..xp, v1..vq`` rows and a ``.json`` sidecar next to `path`."""
    path = Path(path)
    X = np.asarray(X, dtype=float)
    V = np.zeros((X.shape[0], 0)) if V is None else np.asarray(V, dtype=float)
    y = np.asarray(y, dtype=float)
    p, q = X.shape[1], V.shape[1]
    header = ["y"] + [f"x{j + 1}" for j in range(p)] + [f"v{j + 1}" for j in range(q)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.column_stack([y, X, V]):
            w.writerow([_fmt(v) for v in row])
    design = build_design(X, V, y, center=True)
    meta = {"p": p, "q": q, "n": int(X.shape[0]),
            "y_mean": design.y_mean, "Pi_means": design.Pi_means.tolist()}
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def read_dataset(path):
    """Read a dataset CSV; returns ``(X, V, y)`` as float arrays."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if not header or header[0] != "y":
        raise ShapeError(f"{path}: first column must be 'y', got {header[:1]}")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    vcols = [i for i, h in enumerate(header) if h.startswith("v")]
    if len(xcols) + len(vcols) + 1 != len(header):
        raise ShapeError(f"{path}: unrecognised columns in header {header}")
    data = data.reshape(-1, len(header))
    return data[:, xcols], data[:, vcols], data[:, 0]


def load_design(path, center: bool = True) -> LogContrastDesign:
    X, V, y = read_dataset(path)
    return build_design(X, V, y, center=center)


def feature_names(p: int, q: int) -> list:
    return [f"x{j + 1}" for j in range(p)] + [f"v{j + 1}" for j in range(q)]


def write_columns(path, columns: Sequence[str], rows) -> Path:
    """Write dict rows as CSV with 17-significant-digit floats."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return v


def read_columns(path) -> list:
    """Inverse of :func:`write_columns`: numeric-looking cells become floats."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = float(v)
            except (TypeError, ValueError):
                parsed[k] = v
        out.append(parsed)
    return out
