"""Single-machine CDMM and the one-shot averaging baseline."""

from __future__ import annotations

import numpy as np

from .core import EPS_ZERO, LogContrastDesign, PenaltySpec, Shard, ShardedDataset, partition
from .dscdmm import CentralState, fit_dscdmm
from .results import FitResult, SolverConfig, ordered_map


def as_single(data) -> ShardedDataset:
    """View a design, a shard or a one-shard dataset as a one-machine dataset."""
    if isinstance(data, LogContrastDesign):
        return partition(data, 1)
    if isinstance(data, Shard):
        p = int(data.C.sum())
        return ShardedDataset(shards=(data,), C=data.C, p=p, q=data.d - p, n=data.n)
    if isinstance(data, ShardedDataset):
        if data.K == 1:
            return data
        return ShardedDataset(shards=(data.pooled(),), C=data.C, p=data.p, q=data.q, n=data.n)
    raise TypeError(f"cannot fit on object of type {type(data).__name__}")


def fit_gcdmm(data, penalty: PenaltySpec, config: SolverConfig = SolverConfig(),
              init: CentralState | None = None) -> FitResult:
    """Global coordinate descent method of multipliers on pooled data.

    This is the consensus solver run with a single machine, so the local
    step is one ridge solve and the consensus constraint is trivial.
    """
    return fit_dscdmm(as_single(data), penalty, config, init=init, method="gcdmm")


def fit_acdmm(shards: ShardedDataset, penalty: PenaltySpec, config: SolverConfig = SolverConfig(),
              eps_zero: float = EPS_ZERO) -> FitResult:
    """Average of independent per-shard CDMM fits (one communication round).

    The same penalty (weights included) is used on every shard. Entries of
    the average with magnitude at most `eps_zero` count as zeros when
    selection is reported.
    """

    def local(k):
        try:
            return fit_gcdmm(shards[k], penalty, config)
        except Exception as exc:
            raise type(exc)(f"shard {k}: {exc}") from exc

    fits = ordered_map(local, range(shards.K))
    coefs = np.array([f.coef for f in fits])
    coef = coefs.sum(axis=0) / shards.K
    C = shards.C
    trace = [{"round": 1, "zero_sum_residual": abs(float(C @ coef)),
              "local_zero_sum_max": max(abs(float(C @ c)) for c in coefs),
              "local_rounds_max": max(f.rounds for f in fits)}]
    return FitResult(coef=coef, method="acdmm", lam=penalty.lam, converged=all(f.converged for f in fits),
                     rounds=1, sweeps=sum(f.sweeps for f in fits), trace=trace,
                     weights=fits[0].weights, machine_coefs=coefs, messages=shards.K,
                     scalars=shards.K * shards.d, zero_tol=eps_zero)
