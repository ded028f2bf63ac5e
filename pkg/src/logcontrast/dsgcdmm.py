"""
Decentralized chain solver with head/tail group scheduling.

Machines ``1..K`` (``K`` even) sit on a chain. Each round the odd-indexed
*head* machines update from their neighbors' previous-round estimates, the
even-indexed *tail* machines then update from the fresh head estimates, and
finally every machine ascends its zero-sum dual ``mu_k`` and its edge dual
``gamma_k`` (edge ``(k, k+1)``). Each primal step is a coordinate-descent
solve of the machine's local augmented-Lagrangian subproblem.

Indices in this module are 0-based: machine ``k`` here is machine ``k+1``
in the usual 1-based description, so heads are ``0, 2, ...``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .core import PenaltySpec, Shard, ShardedDataset, penalty_weights
from .errors import ShapeError, TopologyError, UsageError
from .results import FitResult, SolverConfig, ordered_map


@dataclass(frozen=True)
class ChainTopology:
    K: int

    def __post_init__(self):
        if self.K < 2 or self.K % 2:
            raise TopologyError(
                f"the chain needs an even number of machines (K >= 2), got K={self.K}; "
                "merge the last two shards to make K even")

    @property
    def heads(self) -> range:
        return range(0, self.K, 2)

    @property
    def tails(self) -> range:
        return range(1, self.K, 2)

    @property
    def edges(self) -> list:
        return [(k, k + 1) for k in range(self.K - 1)]

    def neighbors(self, k: int) -> list:
        return [m for m in (k - 1, k + 1) if 0 <= m < self.K]

    def is_head(self, k: int) -> bool:
        return k % 2 == 0


@dataclass
class MachineState:
    """Primal vector, zero-sum dual and outgoing edge dual of one machine.

    `gamma` is ``None`` on the last machine, which has no outgoing edge.
    `inbox` maps neighbor index to the latest estimate received from it.
    """

    zeta: np.ndarray
    mu: float = 0.0
    gamma: Optional[np.ndarray] = None
    inbox: Optional[dict] = None


@dataclass
class ChainState:
    """Stacked state of the whole chain; ``gammas[k]`` lives on edge ``(k, k+1)``."""

    zetas: np.ndarray
    mus: np.ndarray
    gammas: np.ndarray
    round: int = 0

    @classmethod
    def zeros(cls, K: int, d: int) -> "ChainState":
        return cls(np.zeros((K, d)), np.zeros(K), np.zeros((K - 1, d)))

    def copy(self) -> "ChainState":
        return ChainState(self.zetas.copy(), self.mus.copy(), self.gammas.copy(), self.round)

    def machine(self, k: int) -> MachineState:
        K = self.zetas.shape[0]
        gamma = self.gammas[k].copy() if k < K - 1 else None
        inbox = {m: self.zetas[m].copy() for m in (k - 1, k + 1) if 0 <= m < K}
        return MachineState(self.zetas[k].copy(), float(self.mus[k]), gamma, inbox)

    @classmethod
    def from_machines(cls, machines) -> "ChainState":
        zetas = np.array([m.zeta for m in machines])
        mus = np.array([m.mu for m in machines], dtype=float)
        gammas = np.array([m.gamma for m in machines[:-1]]).reshape(len(machines) - 1, zetas.shape[1])
        return cls(zetas, mus, gammas)


@dataclass
class ResidualReport:
    """Primal residuals ``g_k``, ``r_k`` and head dual residuals ``s_k`` of one round.

    `r` and `s` hold vectors; the ``*_norms`` helpers give max-norms.
    `s` is keyed by head index.
    """

    g: np.ndarray
    r: np.ndarray
    s: dict
    objective: float = np.nan
    objective_gap: float = np.nan

    def r_norms(self, ord=np.inf) -> np.ndarray:
        return np.linalg.norm(self.r, ord=ord, axis=1) if len(self.r) else np.zeros(0)

    def s_norms(self, ord=np.inf) -> dict:
        return {k: float(np.linalg.norm(v, ord=ord)) for k, v in self.s.items()}

    @property
    def max_g(self) -> float:
        return float(np.max(np.abs(self.g)))

    @property
    def max_r(self) -> float:
        return float(np.max(np.abs(self.r))) if self.r.size else 0.0

    @property
    def max_s(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.s.values()), default=0.0)


def compute_A(shard: Shard, mu_k: float, j: int, zeta, rho: float) -> float:
    """Partial-residual term of coordinate `j`, straight from the raw data.

    ``(1/n_k) pi_j'(y_k - sum_{m!=j} zeta_m pi_m) - rho (mu_k c_j / rho + c_j sum_{m!=j} c_m zeta_m)``
    """
    zeta = np.asarray(zeta, dtype=float)
    c = shard.C
    others = np.arange(shard.d) != j
    partial = shard.y - shard.Pi[:, others] @ zeta[others]
    return float(shard.Pi[:, j] @ partial / shard.n - rho * (mu_k * c[j] / rho + c[j] * (c[others] @ zeta[others])))


def _edge_terms(k: int, K: int, d: int, neighbor_zetas: dict, gammas: np.ndarray, rho: float):
    """Linear term and neighbor count entering machine k's coordinate update."""
    lin = np.zeros(d)
    count = 0
    if k > 0:
        lin += rho * neighbor_zetas[k - 1] + gammas[k - 1]
        count += 1
    if k < K - 1:
        lin += rho * neighbor_zetas[k + 1] - gammas[k]
        count += 1
    return lin, count


def machine_cd_update(shard: Shard, k: int, K: int, zeta_start, mu_k: float, neighbor_zetas: dict,
                      gammas: np.ndarray, lam_w, rho: float, sweeps: int, cd_tol: float):
    """Coordinate descent on machine k's subproblem given its neighbors' vectors.

    Returns the new vector and the number of sweeps. Heads pass
    previous-round neighbors, tails pass the current round's head values.
    """
    lin, count = _edge_terms(k, K, shard.d, neighbor_zetas, gammas, rho)
    zeta = np.array(zeta_start, dtype=float)
    used = _kernels.chain_sweeps(zeta, shard.gram, shard.moment, shard.C, float(mu_k), lin, count,
                                 np.asarray(lam_w, dtype=float), rho, sweeps, cd_tol)
    return zeta, used


def head_cd_update(shard, k, K, state: ChainState, lam_w, rho, sweeps, cd_tol):
    """Head step: neighbors are read from the round-l snapshot in `state`."""
    if k % 2:
        raise TopologyError(f"machine {k + 1} is a tail machine")
    nbrs = {m: state.zetas[m] for m in (k - 1, k + 1) if 0 <= m < K}
    return machine_cd_update(shard, k, K, state.zetas[k], state.mus[k], nbrs, state.gammas, lam_w, rho,
                             sweeps, cd_tol)


def tail_cd_update(shard, k, K, state: ChainState, fresh_heads: dict, lam_w, rho, sweeps, cd_tol):
    """Tail step: neighbors are the round-(l+1) head vectors in `fresh_heads`."""
    if k % 2 == 0:
        raise TopologyError(f"machine {k + 1} is a head machine")
    return machine_cd_update(shard, k, K, state.zetas[k], state.mus[k], fresh_heads, state.gammas, lam_w,
                             rho, sweeps, cd_tol)


def dual_update(state: ChainState, C, rho: float) -> ChainState:
    """Ascend ``mu_k`` on ``C' zeta_k`` and ``gamma_k`` on ``zeta_k - zeta_{k+1}``."""
    mus = state.mus + rho * (state.zetas @ C)
    gammas = state.gammas + rho * (state.zetas[:-1] - state.zetas[1:])
    return ChainState(state.zetas, mus, gammas, state.round)


def head_dual_residuals(prev_zetas, zetas, rho: float) -> dict:
    """``s_k = rho sum_{tail neighbors m} (zeta_m^{l+1} - zeta_m^l)`` for every head k."""
    K = zetas.shape[0]
    out = {}
    for k in range(0, K, 2):
        s = np.zeros(zetas.shape[1])
        for m in (k - 1, k + 1):
            if 0 <= m < K:
                s += rho * (zetas[m] - prev_zetas[m])
        out[k] = s
    return out


def residuals(prev_zetas, zetas, C, rho: float) -> ResidualReport:
    zetas = np.asarray(zetas, dtype=float)
    return ResidualReport(g=zetas @ C, r=zetas[:-1] - zetas[1:],
                          s=head_dual_residuals(np.asarray(prev_zetas, dtype=float), zetas, rho))


def local_objectives(shards: ShardedDataset, zetas, lam_w) -> np.ndarray:
    """``Q_k(zeta_k) = (1/2n_k)||y_k - Pi_k zeta_k||^2 + ||lam w_k o zeta_k||_1`` per machine."""
    lam_w = np.broadcast_to(lam_w, np.shape(zetas))
    return np.array([0.5 * z @ s.gram @ z - s.moment @ z + 0.5 * s.yy + np.sum(lw * np.abs(z))
                     for s, z, lw in zip(shards, zetas, lam_w)])


def lemma1_gap_bounds(shards: ShardedDataset, lam_w, state: ChainState, prev_zetas, rho: float,
                      reference: ChainState, slack: float = 1e-6):
    """Sandwich bounds on the optimality gap of one round.

    Returns ``(lower, gap, upper, ok)`` where ``gap = sum_k Q_k(zeta_k) -
    sum_k Q_k(zeta*)``; `lower` uses the reference duals, `upper` the
    current duals and the head dual residuals.
    """
    if reference is None:
        raise UsageError("a converged reference optimum (with duals) is required")
    C = shards.C
    rep = residuals(prev_zetas, state.zetas, C, rho)
    gap = float(local_objectives(shards, state.zetas, lam_w).sum()
                - local_objectives(shards, reference.zetas, lam_w).sum())
    lower = -float(reference.mus @ rep.g) - float(np.sum(reference.gammas * rep.r))
    upper = (-float(state.mus @ rep.g) - float(np.sum(state.gammas * rep.r))
             + sum(float(s @ (reference.zetas[k] - state.zetas[k])) for k, s in rep.s.items()))
    ok = lower - slack <= gap <= upper + slack
    return lower, gap, upper, ok


def dual_feasibility(shards: ShardedDataset, lam_w, state: ChainState, prev_zetas=None, rho: float = 1.0):
    """Coordinatewise subgradient violation of every machine's optimality condition.

    Uses the updated duals: ``0 in dQ_k + mu_k C - gamma_{k-1} + gamma_k``
    (+ ``s_k`` for heads when `prev_zetas` is given). Returns a length-K
    array of max violations; tails should be ~0 after every round.
    """
    K, d = state.zetas.shape
    lam_w = np.broadcast_to(lam_w, (K, d))
    s = head_dual_residuals(prev_zetas, state.zetas, rho) if prev_zetas is not None else {}
    out = np.zeros(K)
    for k, shard in enumerate(shards):
        z = state.zetas[k]
        grad = shard.gram @ z - shard.moment + state.mus[k] * shards.C
        if k > 0:
            grad -= state.gammas[k - 1]
        if k < K - 1:
            grad += state.gammas[k]
        if k in s:
            grad += s[k]
        out[k] = subgradient_violation(grad, z, lam_w[k])
    return out


def subgradient_violation(grad, z, lam_w) -> float:
    """Distance of ``-grad`` from ``lam_w * d|z|``, max over coordinates."""
    nz = z != 0
    v = np.where(nz, np.abs(grad + lam_w * np.sign(z)), np.maximum(np.abs(grad) - lam_w, 0.0))
    return float(np.max(v)) if v.size else 0.0


def fit_dsgcdmm(shards: ShardedDataset, penalty: PenaltySpec, config: SolverConfig = SolverConfig(),
                init: ChainState | None = None, shard_weights=None, output: str = "last") -> FitResult:
    """Run the chain solver.

    Parameters
    ----------
    shard_weights : array_like, optional
        ``(K, d)`` per-machine weights for the LASSO family. By default every
        machine uses ``penalty.weights``.
    output : {'last', 'average'}
        Report the last machine's vector or the average over machines.

    SCAD runs LLA around the solver with weights built from machine 1's
    estimate and shared with all machines.
    """
    topo = ChainTopology(shards.K)
    K, d = shards.K, shards.d
    if output not in ("last", "average"):
        raise UsageError(f"output must be 'last' or 'average', got {output!r}")
    if penalty.kind == "scad" and penalty.lam > 0:
        ref = np.zeros(d)
        result, state = None, init
        rounds = sweeps = 0
        for _ in range(penalty.lla_rounds):
            w = penalty_weights("scad", ref, lam=penalty.lam, a=penalty.scad_a)
            result = _solve(shards, topo, penalty.lam, np.tile(w, (K, 1)), config, state, output)
            rounds += result.rounds
            sweeps += result.sweeps
            state = result.state
            ref = result.machine_coefs[0]
        result.rounds, result.sweeps = rounds, sweeps
        return result
    if shard_weights is not None and penalty.kind != "scad":
        W = np.asarray(shard_weights, dtype=float)
        if W.shape != (K, d):
            raise ShapeError(f"shard_weights must have shape {(K, d)}, got {W.shape}")
    else:
        w = np.ones(d) if penalty.kind == "scad" else penalty.resolve_weights(d)
        W = np.tile(w, (K, 1))
    return _solve(shards, topo, penalty.lam, W, config, init, output)


def _solve(shards, topo, lam, W, config, init, output) -> FitResult:
    K, d, C, rho = shards.K, shards.d, shards.C, config.rho
    lam_w = lam * W
    if init is None:
        state = ChainState.zeros(K, d)
    else:
        if init.zetas.shape != (K, d):
            raise ShapeError(f"warm start has shape {init.zetas.shape}, expected {(K, d)}")
        state = init.copy()
    trace, history = [], [] if config.history else None
    total_sweeps = 0
    converged = False
    msgs_per_round = 2 * (K - 1)

    for l in range(config.rounds):
        prev = state.zetas.copy()

        def head(k):
            return head_cd_update(shards[k], k, K, state, lam_w[k], rho, config.sweeps, config.cd_tol)

        heads = ordered_map(head, topo.heads)
        new = prev.copy()
        for k, (z, used) in zip(topo.heads, heads):
            new[k] = z
            total_sweeps += used

        def tail(k):
            fresh = {m: new[m] for m in (k - 1, k + 1) if 0 <= m < K}
            return tail_cd_update(shards[k], k, K, state, fresh, lam_w[k], rho, config.sweeps, config.cd_tol)

        tails = ordered_map(tail, topo.tails)
        for k, (z, used) in zip(topo.tails, tails):
            new[k] = z
            total_sweeps += used

        state = dual_update(ChainState(new, state.mus, state.gammas, state.round + 1), C, rho)
        rep = residuals(prev, new, C, rho)
        objective = float(local_objectives(shards, new, lam_w).sum())
        trace.append({"round": l + 1, "r_norm": rep.r_norms(2).tolist(), "g": rep.g.tolist(),
                      "s_norm": [float(np.linalg.norm(rep.s[k])) for k in topo.heads],
                      "max_g": rep.max_g, "max_r": rep.max_r, "max_s": rep.max_s,
                      "objective": objective, "messages": msgs_per_round * (l + 1),
                      "scalars": msgs_per_round * d * (l + 1)})
        if history is not None:
            history.append(state.copy())
        converged = max(rep.max_g, rep.max_r, rep.max_s) <= config.outer_tol
        if converged and config.stop_early:
            break

    rounds = len(trace)
    coef = state.zetas[-1].copy() if output == "last" else state.zetas.mean(axis=0)
    return FitResult(coef=coef, method="dsgcdmm", lam=lam, converged=converged, rounds=rounds,
                     sweeps=total_sweeps, trace=trace, state=state, weights=W[0].copy(),
                     machine_coefs=state.zetas.copy(), history=history,
                     messages=msgs_per_round * rounds, scalars=msgs_per_round * d * rounds)
