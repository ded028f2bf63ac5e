"""
Centralized consensus solver (master-worker).

Every round the workers solve a ridge problem in parallel, the master runs
coordinate descent on the penalized consensus variable under the zero-sum
constraint, and both dual variables take an ascent step.

The penalty is applied at the pooled scale: with K shards the objective is

    (1/K) sum_k (1/2 n_k) ||y_k - Pi_k zeta||^2 + lam ||w o zeta||_1,

so one `lam` means the same thing for every solver in the package. In the
master update this shows up as the threshold ``K lam w_j / rho``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _kernels
from .core import PenaltySpec, Shard, ShardedDataset
from .errors import NumericalError, ParameterError, ShapeError
from .results import FitResult, SolverConfig, run_lla


@dataclass
class CentralState:
    """Master variable, zero-sum dual and per-worker (local, edge-dual) pairs."""

    zeta: np.ndarray
    mu: float
    zetas: np.ndarray
    gammas: np.ndarray
    round: int = 0

    @classmethod
    def zeros(cls, K: int, d: int) -> "CentralState":
        return cls(zeta=np.zeros(d), mu=0.0, zetas=np.zeros((K, d)), gammas=np.zeros((K, d)))

    def copy(self) -> "CentralState":
        return CentralState(self.zeta.copy(), float(self.mu), self.zetas.copy(), self.gammas.copy(), self.round)


def ridge_factor(shard: Shard, rho: float):
    """Cholesky factor of ``Pi_k' Pi_k / n_k + rho I``, reusable across rounds."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    try:
        return linalg.cho_factor(shard.gram + rho * np.eye(shard.d), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"ridge system of shard {shard.index} is not positive definite") from exc
    except ValueError as exc:
        raise NumericalError(f"shard {shard.index} holds non-finite values") from exc


def local_ridge_update(shard: Shard, zeta_global, gamma_k, rho: float, factor=None) -> np.ndarray:
    """Worker step: solve ``(G_k + rho I) x = b_k + rho zeta - gamma_k``."""
    if factor is None:
        factor = ridge_factor(shard, rho)
    rhs = shard.moment + rho * np.asarray(zeta_global, dtype=float) - np.asarray(gamma_k, dtype=float)
    x = linalg.cho_solve(factor, rhs)
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"ridge solve on shard {shard.index} produced non-finite values")
    return x


def master_cd_update(state: CentralState, C, lam_w, rho: float, sweeps: int, cd_tol: float):
    """Coordinate descent for the master variable, warm-started at ``state.zeta``.

    `lam_w` is the pooled-scale threshold vector ``lam * w``. Returns the new
    master vector and the number of sweeps used; `state` is not modified.
    """
    K = state.zetas.shape[0]
    zeta = state.zeta.copy()
    thresh = K * np.asarray(lam_w, dtype=float) / rho
    used = _kernels.master_sweeps(zeta, state.zetas.sum(axis=0), state.gammas.sum(axis=0), float(state.mu),
                                  np.asarray(C, dtype=float), thresh, K, rho, sweeps, cd_tol)
    return zeta, used


def dual_update_mu(mu: float, zeta_global, C, rho: float) -> float:
    return float(mu + rho * float(np.dot(C, zeta_global)))


def dual_update_gamma(gamma_k, zeta_k, zeta_global, rho: float) -> np.ndarray:
    return np.asarray(gamma_k) + rho * (np.asarray(zeta_k) - np.asarray(zeta_global))


def pooled_objective(shards: ShardedDataset, zeta, lam_w) -> float:
    """``(1/K) sum_k loss_k(zeta) + sum_j lam w_j |zeta_j|``."""
    loss = sum(0.5 * zeta @ s.gram @ zeta - s.moment @ zeta + 0.5 * s.yy for s in shards)
    return float(loss / shards.K + np.sum(lam_w * np.abs(zeta)))


def fit_dscdmm(shards: ShardedDataset, penalty: PenaltySpec, config: SolverConfig = SolverConfig(),
               init: CentralState | None = None, method: str = "dscdmm") -> FitResult:
    """Run the consensus solver for up to ``config.rounds`` rounds.

    SCAD penalties are handled by LLA reweighting around this solver, with
    weights computed from the master estimate.
    """
    d = shards.d
    if penalty.kind == "scad" and penalty.lam > 0:
        return run_lla(lambda w, st: _solve(shards, penalty.lam, w, config, st or init, method),
                       penalty, d, reference=lambda r: r.coef)
    w = np.ones(d) if penalty.kind == "scad" else penalty.resolve_weights(d)
    return _solve(shards, penalty.lam, w, config, init, method)


def _solve(shards, lam, weights, config, init, method) -> FitResult:
    K, d, C, rho = shards.K, shards.d, shards.C, config.rho
    factors = [ridge_factor(s, rho) for s in shards]
    if init is None:
        state = CentralState.zeros(K, d)
    else:
        if init.zetas.shape != (K, d):
            raise ShapeError(f"warm start has shape {init.zetas.shape}, expected {(K, d)}")
        state = init.copy()
    lam_w = lam * weights
    trace, history = [], [] if config.history else None
    total_sweeps = 0
    converged = False
    per_round_msgs = 0 if method == "gcdmm" else 2 * K
    for l in range(config.rounds):
        state.zetas = np.array([local_ridge_update(shards[k], state.zeta, state.gammas[k], rho, factors[k])
                                for k in range(K)])
        previous = state.zeta
        state.zeta, used = master_cd_update(state, C, lam_w, rho, config.sweeps, config.cd_tol)
        total_sweeps += used
        state.mu = dual_update_mu(state.mu, state.zeta, C, rho)
        state.gammas = dual_update_gamma(state.gammas, state.zetas, state.zeta, rho)
        state.round += 1

        consensus = float(np.max(np.abs(state.zetas - state.zeta)))
        zero_sum = abs(float(C @ state.zeta))
        dual = rho * float(np.max(np.abs(state.zeta - previous)))
        trace.append({"round": l + 1, "consensus_residual": consensus, "zero_sum_residual": zero_sum,
                      "dual_residual": dual, "objective": pooled_objective(shards, state.zeta, lam_w),
                      "sweeps": used, "messages": per_round_msgs * (l + 1),
                      "scalars": per_round_msgs * d * (l + 1)})
        if history is not None:
            history.append(state.copy())
        converged = max(consensus, zero_sum, dual) <= config.outer_tol
        if converged and config.stop_early:
            break
    rounds = len(trace)
    return FitResult(coef=state.zeta.copy(), method=method, lam=lam, converged=converged, rounds=rounds,
                     sweeps=total_sweeps, trace=trace, state=state, weights=weights,
                     machine_coefs=state.zetas.copy(), history=history,
                     messages=per_round_msgs * rounds, scalars=per_round_msgs * d * rounds)
