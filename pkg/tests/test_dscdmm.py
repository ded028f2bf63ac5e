import numpy as np
import pytest

from logcontrast import _kernels
from logcontrast.baseline import fit_gcdmm
from logcontrast.core import PenaltySpec, Shard, partition
from logcontrast.dscdmm import (CentralState, dual_update_gamma, dual_update_mu, fit_dscdmm, local_ridge_update,
                                master_cd_update)
from logcontrast.results import SolverConfig, ordered_map

import oracles
from test_baseline import TIGHT, make_design


def random_master_state(rng, K, d, p):
    C = np.r_[np.ones(p), np.zeros(d - p)]
    st = CentralState(zeta=rng.normal(size=d), mu=rng.normal(), zetas=rng.normal(size=(K, d)),
                      gammas=rng.normal(size=(K, d)))
    return st, C


class TestRidge:
    def test_zero_inputs(self):
        des = make_design(20, 3, 2, 0)
        s = partition(des, 1)[0]
        s0 = Shard(y=np.zeros(20), Pi=s.Pi, C=s.C)
        np.testing.assert_array_equal(local_ridge_update(s0, np.zeros(5), np.zeros(5), 1.0), 0)

    def test_orthonormal_design(self):
        Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(16, 4)))
        Pi = Q * 4.0  # Pi'Pi / 16 = I
        y = np.random.default_rng(2).normal(size=16)
        s = Shard(y=y, Pi=Pi, C=np.array([1.0, 1, 0, 0]))
        z, g = np.array([1.0, 2, 3, 4]), np.array([0.5, 0, -0.5, 1])
        np.testing.assert_allclose(local_ridge_update(s, z, g, 1.0), (Pi.T @ y / 16 + z - g) / 2, atol=1e-14)

    def test_dense_solve_oracle(self):
        rng = np.random.default_rng(3)
        Pi, y = rng.normal(size=(20, 5)), rng.normal(size=20)
        s = Shard(y=y, Pi=Pi, C=np.array([1.0, 1, 1, 0, 0]))
        z, g, rho = rng.normal(size=5), rng.normal(size=5), 0.7
        ref = np.linalg.solve(Pi.T @ Pi / 20 + rho * np.eye(5), Pi.T @ y / 20 + rho * z - g)
        out = local_ridge_update(s, z, g, rho)
        np.testing.assert_allclose(out, ref, atol=1e-10, rtol=0)
        np.testing.assert_array_equal(out, local_ridge_update(s, z, g, rho))


class TestMaster:
    def test_all_zero(self):
        st = CentralState.zeros(3, 4)
        z, _ = master_cd_update(st, np.array([1.0, 1, 0, 0]), np.full(4, 0.1), 1.0, 5, 1e-10)
        np.testing.assert_array_equal(z, 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_single_sweep_coordinates(self, seed):
        rng = np.random.default_rng(seed)
        K, d = 1 + seed, 2 + seed
        st, C = random_master_state(rng, K, d, max(1, d - 1))
        lam_w, rho = rng.uniform(0, 0.5, d), rng.uniform(0.2, 2)
        kw = dict(zsum=st.zetas.sum(0), gsum=st.gammas.sum(0), mu=st.mu, C=C, K=K, rho=rho, lam_w=lam_w)
        current = st.zeta.copy()
        new, used = master_cd_update(st, C, lam_w, rho, 1, 1e-12)
        assert used == 1
        for j in range(d):
            current[j] = oracles.coordinate_minimizer(oracles.master_objective, current, j, **kw)
            assert new[j] == pytest.approx(current[j], abs=1e-8)

    def test_converged_subgradient(self):
        rng = np.random.default_rng(9)
        st, C = random_master_state(rng, 4, 6, 4)
        lam_w, rho = np.full(6, 0.3), 0.8
        z, _ = master_cd_update(st, C, lam_w, rho, 10000, 1e-14)
        gap = oracles.subgradient_gap(oracles.master_objective, z, zsum=st.zetas.sum(0), gsum=st.gammas.sum(0),
                                      mu=st.mu, C=C, K=4, rho=rho, lam_w=lam_w)
        assert gap <= 1e-6

    def test_state_not_mutated(self):
        st, C = random_master_state(np.random.default_rng(4), 2, 3, 2)
        before = st.zeta.copy()
        master_cd_update(st, C, np.zeros(3), 1.0, 3, 1e-8)
        np.testing.assert_array_equal(st.zeta, before)


class TestDuals:
    def test_mu(self):
        assert dual_update_mu(0.3, np.array([1.0, -1.0, 5.0]), np.array([1.0, 1, 0]), 2.0) == 0.3
        assert dual_update_mu(0.0, np.array([0.25, 0.25]), np.array([1.0, 1.0]), 1.0) == 0.5

    def test_gamma(self):
        np.testing.assert_array_equal(dual_update_gamma(np.zeros(2), np.array([2.0, 1]), np.array([1.0, 1]), 2.0),
                                      [2.0, 0.0])
        g = np.array([0.1, 0.2])
        np.testing.assert_array_equal(dual_update_gamma(g, np.ones(2), np.ones(2), 5.0), g)

    def test_mu_telescopes(self):
        des = make_design(80, 4, 2, 5)
        fit = fit_dscdmm(partition(des, 2), PenaltySpec("lasso", 0.02), SolverConfig(rho=0.5, rounds=30,
                                                                                    stop_early=False))
        g = [des.C @ h.zeta for h in fit.history] if fit.history else None
        assert g is None  # history is off by default
        cfg = SolverConfig(rho=0.5, rounds=30, stop_early=False, history=True)
        fit = fit_dscdmm(partition(des, 2), PenaltySpec("lasso", 0.02), cfg)
        total = 0.5 * sum(des.C @ h.zeta for h in fit.history)
        assert fit.state.mu == pytest.approx(total, abs=1e-12)


class TestFit:
    def test_single_machine_equals_global(self):
        des = make_design(100, 4, 3, 6)
        pen = PenaltySpec("lasso", 0.03)
        a = fit_dscdmm(partition(des, 1), pen, TIGHT)
        b = fit_gcdmm(des, pen, TIGHT)
        assert np.max(np.abs(a.coef - b.coef)) <= 1e-10

    def test_matches_global_at_500_rounds(self):
        des = make_design(200, 5, 3, 7)
        pen = PenaltySpec("lasso", 0.02)
        dist = fit_dscdmm(partition(des, 4), pen, SolverConfig(rho=1.0, rounds=500))
        glob = fit_gcdmm(des, pen, TIGHT)
        assert np.max(np.abs(dist.coef - glob.coef)) <= 1e-3

    def test_converged_invariants_and_trace(self):
        des = make_design(240, 5, 3, 8)
        fit = fit_dscdmm(partition(des, 3), PenaltySpec("lasso", 0.02), SolverConfig(rho=1.0, rounds=5000))
        assert fit.converged
        assert abs(des.C @ fit.coef) <= 1e-6
        assert np.max(np.abs(fit.machine_coefs - fit.coef)) <= 1e-5
        res = [t["consensus_residual"] for t in fit.trace]
        assert res[-1] < res[len(res) // 2]
        assert fit.messages == 6 * fit.rounds
        assert {"round", "consensus_residual", "zero_sum_residual", "objective"} <= set(fit.trace[0])

    def test_parallel_equals_serial(self, monkeypatch):
        des = make_design(150, 4, 2, 9)
        pen = PenaltySpec("lasso", 0.02)
        cfg = SolverConfig(rho=1.0, rounds=40)
        serial = fit_dscdmm(partition(des, 5), pen, cfg)
        monkeypatch.setenv("LOGCONTRAST_THREADS", "4")
        parallel = fit_dscdmm(partition(des, 5), pen, cfg)
        np.testing.assert_array_equal(serial.coef, parallel.coef)

    def test_warm_start_round_count(self):
        des = make_design(100, 4, 2, 10)
        pen = PenaltySpec("lasso", 0.02)
        first = fit_dscdmm(partition(des, 2), pen, SolverConfig(rho=1.0, rounds=10, stop_early=False))
        second = fit_dscdmm(partition(des, 2), pen, SolverConfig(rho=1.0, rounds=5, stop_early=False),
                            init=first.state)
        assert second.rounds == 5 and second.state.round == 15


def test_ordered_map_keeps_order():
    assert ordered_map(lambda x: x * x, range(10), workers=4) == [x * x for x in range(10)]


def test_kernel_stops_at_tolerance():
    z = np.zeros(3)
    used = _kernels.master_sweeps(z, np.ones(3), np.zeros(3), 0.0, np.zeros(3), np.zeros(3), 1, 1.0, 50, 1e-12)
    assert used == 2  # second sweep sees no change
    np.testing.assert_allclose(z, 1.0)
