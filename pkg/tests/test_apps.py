import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pddssca.apps import (CmacInstance, ThpInstance, cmac_problem, cmac_solver, dual_ellipsoid_baseline,
                          per_state_power, sample_channels, sample_gains, short_term_constraint_baseline,
                          thp_problem, thp_solver)
from pddssca.core import ProblemError, evaluate_sample
from pddssca.shortterm import cmac_short_term, run_short_term
from pddssca.shortterm.wmmse import pack, rates, rf_precoder, unpack
from pddssca.unroll import fd_oracle, grad_through

from oracles import grid_argmin


class TestCmacInstance:
    def test_simulation_configuration(self):
        inst = CmacInstance()
        assert inst.N == 2 and inst.gamma == 0.5 and inst.power_db == 5.0
        np.testing.assert_allclose(inst.power, [10**0.5, 10**0.5])
        assert inst.power[0] == pytest.approx(3.16227766, abs=1e-8)

    @pytest.mark.parametrize("kw", [{"N": 0}, {"gamma": 0.0}, {"gain_law": "rayleigh"}, {"gain_mean": -1.0}])
    def test_validation(self, kw):
        with pytest.raises(ProblemError):
            CmacInstance(**kw)

    @pytest.mark.parametrize("law,mean", [("exponential", 1.0), ("exponential", 2.5), ("uniform", 1.0)])
    def test_sampler_mean(self, law, mean):
        draws = sample_gains(np.random.default_rng(0), 100_000, 1, law=law, mean=mean).ravel()
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - mean) <= 3 * se

    def test_sampler_determinism(self):
        a = sample_gains(np.random.default_rng(9), 10, 2)
        b = sample_gains(np.random.default_rng(9), 10, 2)
        assert np.array_equal(a, b) and a.shape == (10, 2, 2)


class TestCmacProblem:
    def test_huge_prices_switch_users_off(self):
        inst = CmacInstance()
        p = cmac_problem(inst)
        spec = cmac_solver(p, inst)
        xi = sample_gains(np.random.default_rng(1), 1, 2)[0]
        lam = np.full(3, 1e8)
        y = run_short_term(spec, np.zeros(0), lam, xi).y
        np.testing.assert_array_equal(y, [0.0, 0.0])
        vals = [evaluate_sample(p, i, np.zeros(0), y, xi)[0] for i in range(p.m + 1)]
        assert vals[1] == -inst.power[0] and vals[2] == -inst.power[1] and vals[3] == -inst.gamma

    def test_gradients_match_finite_differences(self):
        inst = CmacInstance()
        p = cmac_problem(inst)
        spec = cmac_solver(p, inst)
        rng = np.random.default_rng(12)
        for _ in range(50):
            lam = rng.uniform(0.05, 2.0, 3)
            xi = sample_gains(rng, 1, 2)[0]
            res, tape = run_short_term(spec, np.zeros(0), lam, xi, record=True)
            for i in range(p.m + 1):
                _, gl, _ = grad_through(p, i, np.zeros(0), lam, xi, res, tape)
                _, fl = fd_oracle(p, i, np.zeros(0), lam, xi, spec)
                np.testing.assert_allclose(gl, fl, rtol=1e-6, atol=1e-8)

    @given(st.lists(st.floats(0.0, 5.0), min_size=6, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_interference_linear_in_cross_gains(self, v):
        inst = CmacInstance()
        p = cmac_problem(inst)
        a, b, y = np.array(v[0:2]), np.array(v[2:4]), np.array(v[4:6])
        g1 = evaluate_sample(p, 3, np.zeros(0), y, np.stack([a, b]))[0]
        g2 = evaluate_sample(p, 3, np.zeros(0), y, np.stack([a, 2 * b]))[0]
        assert g2 - g1 == pytest.approx(b @ y, abs=1e-12)
        assert g1 == pytest.approx(b @ y - inst.gamma, abs=1e-12)

    def test_pool_sampling(self):
        pool = sample_gains(np.random.default_rng(1), 50, 2)
        p = cmac_problem(CmacInstance(), pool=pool)
        states = p.sample(np.random.default_rng(0), 200)
        assert all(any(np.array_equal(s, q) for q in pool) for s in states)


class TestThp:
    def test_dimension_rules(self):
        with pytest.raises(ProblemError):
            ThpInstance(M=4, S=4, K=2)
        with pytest.raises(ProblemError):
            ThpInstance(M=8, S=2, K=3)

    @given(st.lists(st.floats(-20, 20), min_size=32, max_size=32))
    @settings(max_examples=50, deadline=None)
    def test_analog_precoder_unit_modulus(self, theta):
        F = rf_precoder(np.array(theta), 16, 2)
        np.testing.assert_allclose(np.abs(F), 1.0, rtol=0, atol=1e-15)

    def test_rate_of_clean_unit_link(self):
        r = rates(np.eye(2, dtype=complex), np.eye(2, dtype=complex))[0]
        np.testing.assert_allclose(r, [math.log(2.0)] * 2, rtol=1e-15)
        assert math.log(2.0) == pytest.approx(0.693147, abs=1e-6)

    def test_rate_constraint_through_problem(self):
        inst = ThpInstance(M=4, S=2, K=2)
        p = thp_problem(inst)
        theta = np.random.default_rng(3).uniform(0, 6, inst.n_x)
        H = np.linalg.pinv(rf_precoder(theta, 4, 2))  # effective channel is the identity
        y = pack(np.eye(2, dtype=complex))
        for k in (1, 2):
            assert evaluate_sample(p, k, theta, y, H)[0] == pytest.approx(inst.gamma - math.log(2.0), abs=1e-12)
        assert evaluate_sample(p, 0, theta, y, H)[0] == pytest.approx(np.linalg.norm(rf_precoder(theta, 4, 2)) ** 2)

    @given(st.integers(0, 10**6), st.floats(0, 2 * math.pi), st.integers(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_rate_invariant_to_column_phase(self, seed, phi, k):
        inst = ThpInstance(M=6, S=2, K=2)
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0, 6, inst.n_x)
        H = sample_channels(rng, 1, inst)[0]
        G = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        G2 = G.copy()
        G2[:, k] *= np.exp(1j * phi)
        p = thp_problem(inst)
        for i in range(3):
            a = evaluate_sample(p, i, theta, pack(G), H)[0]
            b = evaluate_sample(p, i, theta, pack(G2), H)[0]
            assert a == pytest.approx(b, abs=1e-12)

    def test_channel_power_normalization(self):
        inst = ThpInstance()
        H = sample_channels(np.random.default_rng(0), 20_000, inst)
        energy = np.sum(np.abs(H) ** 2, axis=2).ravel()
        se = energy.std(ddof=1) / math.sqrt(energy.size)
        assert abs(energy.mean() - inst.M) <= 3 * se

    def test_solver_shapes(self):
        inst = ThpInstance(M=8, S=2, K=2)
        p = thp_problem(inst)
        spec = thp_solver(p, inst, J=3)
        rng = np.random.default_rng(0)
        res = run_short_term(spec, rng.uniform(0, 6, inst.n_x), np.ones(2), sample_channels(rng, 1, inst)[0])
        assert res.y.shape == (inst.n_y,) and unpack(res.y, 2, 2).shape == (2, 2)
        assert res.kkt_errors[1] == 0.0


class TestEllipsoid:
    def test_inactive_constraints_give_small_prices(self):
        inst = CmacInstance(gamma=1e6, power_db=40.0)
        states = sample_gains(np.random.default_rng(1), 200, 2)
        # prices of order 1 / (N P) need a volume far below their cube to resolve
        res = dual_ellipsoid_baseline(inst, states, volume_tol=1e-22)
        assert np.all(res.lam <= 1e-3) and res.upsilon <= 1e-3
        assert res.max_violation <= 1e-3 * inst.power[0]

    def test_active_subgradient_small(self, cmac_pool, ellipsoid_result):
        inst = CmacInstance()
        lam, ups = ellipsoid_result.lam, ellipsoid_result.upsilon
        p = cmac_short_term(lam, ups, cmac_pool[:, 0], cmac_pool[:, 1])
        cons = np.append(p.mean(axis=0) - inst.power, np.mean(np.sum(cmac_pool[:, 1] * p, axis=1)) - inst.gamma)
        prices = np.append(lam, ups)
        active = prices > 1e-6
        assert np.all(np.abs(cons[active]) <= 1e-3)
        assert np.all(cons <= 1e-3)
        assert ellipsoid_result.max_violation <= 1e-3

    def test_default_tolerance_runs(self, cmac_pool):
        res = dual_ellipsoid_baseline(CmacInstance(), cmac_pool)
        assert res.volume < 1e-10 and np.isfinite(res.capacity)


class TestShortTermConstraintBaseline:
    def test_no_cross_gain_uses_full_budget(self):
        p = per_state_power(np.array([1.0, 2.0]), np.zeros(2), np.array([3.0, 3.0]), 0.5)
        np.testing.assert_allclose(p, [3.0, 3.0], atol=1e-7)

    def test_zero_interference_budget(self):
        p = per_state_power(np.array([1.0, 2.0]), np.array([0.5, 0.2]), np.array([3.0, 3.0]), 0.0)
        np.testing.assert_array_equal(p, [0.0, 0.0])

    def test_matches_grid(self):
        rng = np.random.default_rng(5)
        P = 10**0.5
        axis = np.linspace(0, P, 1001)
        for _ in range(10):
            a, b = rng.exponential(size=2), rng.exponential(size=2)
            p = per_state_power(a, b, np.array([P, P]), 0.5)
            assert np.all(p >= -1e-12) and np.all(p <= P + 1e-12) and b @ p <= 0.5 + 1e-9
            _, best = grid_argmin(lambda x, y: -np.log1p(a[0] * x + a[1] * y), [axis, axis],
                                  mask=lambda x, y: b[0] * x + b[1] * y <= 0.5)
            assert -math.log1p(a @ p) <= best + 1e-9

    def test_average_capacity(self):
        states = sample_gains(np.random.default_rng(2), 20, 2)
        cap, powers = short_term_constraint_baseline(CmacInstance(), states)
        assert powers.shape == (20, 2) and cap > 0
