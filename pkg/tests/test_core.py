import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pddssca.apps import CmacInstance, ThpInstance, cmac_problem, thp_problem
from pddssca.core import (Box, KktReport, LongTermIterate, ProblemDefinition, ProblemError,
                          StepSchedule, evaluate_sample, kkt_report, short_term_residuals, step_values)
from pddssca.shortterm import ShortTermResult

from helpers import quadratic_problem
from oracles import central_diff

# frozen from oracles: formula evaluation in double precision
RHO_990 = 0.019952623149688792
GAMMA_990 = 0.014925373134328358
RAW_RHO_0 = 1.258925411794167


class TestBox:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ProblemError):
            Box(np.array([1.0]), np.array([0.0]))

    def test_rejects_infinite_bounds(self):
        with pytest.raises(ProblemError):
            Box(np.array([0.0]), np.array([np.inf]))

    def test_project_and_contains(self):
        box = Box.uniform(2, 0.0, 1.0)
        np.testing.assert_array_equal(box.project([1.5, -0.2]), [1.0, 0.0])
        assert box.contains([0.5, 1.0])
        assert not box.contains([0.5, 1.1])
        np.testing.assert_array_equal(box.center(), [0.5, 0.5])


class TestProblemDefinition:
    def test_zero_constraints_are_legal(self):
        p = quadratic_problem(with_long=False)
        assert p.m == 0 and p.n == 0

    def test_function_count_checked(self):
        p = quadratic_problem()
        with pytest.raises(ProblemError):
            ProblemDefinition(n_x=2, n_y=2, m=2, n=0, domain_x=p.domain_x, domain_y=p.domain_y,
                              sample_fns=p.sample_fns)

    def test_evaluators_deterministic(self):
        p = quadratic_problem()
        x, y, xi = np.array([0.1, 0.2]), np.array([0.3, -0.4]), np.array([0.5, 0.6])
        a = evaluate_sample(p, 0, x, y, xi)
        b = evaluate_sample(p, 0, x, y, xi)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


class TestStepValues:
    def test_clipped_at_start(self):
        s = StepSchedule()
        assert 10 / 10**0.9 == pytest.approx(RAW_RHO_0)
        assert step_values(s, 0) == (1.0, 1.0)

    def test_table_values_at_990(self):
        rho, gamma = step_values(StepSchedule(), 990)
        assert rho == pytest.approx(RHO_990, rel=1e-12)
        assert gamma == pytest.approx(GAMMA_990, rel=1e-12)

    def test_negative_iteration_rejected(self):
        with pytest.raises(ProblemError):
            step_values(StepSchedule(), -1)

    def test_exponent_range(self):
        with pytest.raises(ProblemError):
            StepSchedule(rho_exponent=0.5)

    @given(st.integers(0, 10**6), st.floats(0.51, 1.0), st.floats(0.1, 50), st.floats(0.1, 50))
    @settings(max_examples=200, deadline=None)
    def test_monotone_and_in_unit_interval(self, t, expo, scale, shift):
        s = StepSchedule(rho_scale=scale, rho_shift=shift, rho_exponent=expo,
                         gamma_scale=scale, gamma_shift=shift)
        r0, g0 = step_values(s, t)
        r1, g1 = step_values(s, t + 1)
        assert 0 < r1 <= r0 <= 1 and 0 < g1 <= g0 <= 1

    def test_gamma_over_rho_vanishes(self):
        s = StepSchedule()
        ratios = [step_values(s, t)[1] / step_values(s, t)[0] for t in (10, 10**3, 10**7, 10**15)]
        assert all(b < a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] < 0.05


class TestEvaluateSample:
    def test_cmac_interference_at_zero_power(self):
        inst = CmacInstance()
        p = cmac_problem(inst)
        a, b = np.array([2.0, 1.0]), np.array([0.5, 3.0])
        v, gx, gy = evaluate_sample(p, inst.N + 1, np.zeros(0), np.zeros(2), np.stack([a, b]))
        assert v == -inst.gamma
        # gradient in p is b; per unit of the bracket (a_i/c_i - 1)^+ it is b / (N a)
        np.testing.assert_array_equal(gy, b)
        np.testing.assert_allclose(gy / (inst.N * a), b / (inst.N * a))

    def test_cmac_objective_value(self):
        p = cmac_problem(CmacInstance())
        xi = np.array([[2.0, 1.0], [1.0, 1.0]])
        v, _, _ = evaluate_sample(p, 0, np.zeros(0), np.array([0.25, 0.0]), xi)
        # g_0 is the negated capacity; capacity is log(1 + 2 * 0.25)
        assert v == pytest.approx(-math.log(1.5), abs=1e-15)
        assert -v == pytest.approx(0.405465108108, abs=1e-12)

    def test_thp_zero_precoder(self):
        inst = ThpInstance(M=4, S=2, K=2)
        p = thp_problem(inst)
        H = np.ones((2, 4), dtype=complex)
        theta = np.zeros(inst.n_x)
        assert evaluate_sample(p, 0, theta, np.zeros(inst.n_y), H)[0] == 0.0
        for k in (1, 2):
            assert evaluate_sample(p, k, theta, np.zeros(inst.n_y), H)[0] == pytest.approx(inst.gamma)

    def test_index_checked(self):
        p = quadratic_problem()
        with pytest.raises(ProblemError):
            evaluate_sample(p, 2, np.zeros(2), np.zeros(2), np.zeros(2))

    def test_dimension_checked(self):
        p = quadratic_problem()
        with pytest.raises(ProblemError):
            evaluate_sample(p, 0, np.zeros(3), np.zeros(2), np.zeros(2))

    @pytest.mark.parametrize("which", ["quadratic", "cmac", "thp"])
    def test_partials_match_finite_differences(self, which):
        rng = np.random.default_rng(5)
        if which == "quadratic":
            p = quadratic_problem()
            pts = [(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)) for _ in range(10)]
        elif which == "cmac":
            p = cmac_problem(CmacInstance())
            pts = [(np.zeros(0), rng.uniform(0.1, 3, 2), rng.exponential(size=(2, 2)) + 0.1) for _ in range(10)]
        else:
            inst = ThpInstance(M=4, S=2, K=2)
            p = thp_problem(inst)
            pts = [(rng.uniform(0, 6, inst.n_x), rng.normal(size=inst.n_y),
                    rng.normal(size=(2, 4)) + 1j * rng.normal(size=(2, 4))) for _ in range(10)]
        for x, y, xi in pts:
            for i in range(p.m + 1):
                _, gx, gy = evaluate_sample(p, i, x, y, xi)
                fx = central_diff(lambda v: evaluate_sample(p, i, v, y, xi)[0], x)
                fy = central_diff(lambda v: evaluate_sample(p, i, x, v, xi)[0], y)
                np.testing.assert_allclose(gx, fx, rtol=1e-5, atol=1e-7)
                np.testing.assert_allclose(gy, fy, rtol=1e-5, atol=1e-7)


class TestIterate:
    def test_box_checked(self):
        p = quadratic_problem()
        LongTermIterate(np.zeros(2), np.ones(1), 0).check(p)
        with pytest.raises(ProblemError):
            LongTermIterate(np.zeros(2), -np.ones(1), 0).check(p)
        with pytest.raises(ProblemError):
            LongTermIterate(np.full(2, 6.0), np.ones(1), 0).check(p)


class TestKktReport:
    def test_unconstrained_optimum_has_zero_residuals(self):
        # min E[1/2 (y - x - xi)^2 + 1/4 x^2] with xi fixed: y = x + xi, x = 0
        p = quadratic_problem(with_long=False)
        xi = np.array([0.3, -0.2])
        y = xi.copy()
        res = ShortTermResult(y=y, nu=None, kkt_errors=short_term_residuals(p, np.zeros(2), np.zeros(0), y, xi))
        rep = kkt_report(p, LongTermIterate(np.zeros(2), np.zeros(0), 0), [(res, xi)], np.zeros(1))
        assert isinstance(rep, KktReport)
        for key in ("stationarity_short", "feasibility_short", "slackness_short",
                    "stationarity_long", "slackness_long"):
            assert rep.as_dict()[key] <= 1e-10

    def test_scalar_stationarity(self):
        def g0(x, y, xi):
            return float(x[0] ** 2), 2.0 * x, np.zeros(1)

        p = ProblemDefinition(n_x=1, n_y=1, m=0, n=0, domain_x=Box.uniform(1, -5, 5),
                              domain_y=Box.uniform(1, -1, 1), sample_fns=[g0])
        res = ShortTermResult(y=np.zeros(1), nu=None, kkt_errors=(0.0, 0.0, 0.0))
        rep = kkt_report(p, LongTermIterate(np.ones(1), np.zeros(0), 0), [(res, None)], np.zeros(1))
        assert rep.stationarity_long == pytest.approx(2.0)

    def test_projected_point_with_exact_multiplier(self):
        # minimize 1/2 ||y - x - xi||_D^2 s.t. y0 + y1 <= 0.5 with x = 0, xi = (1, 1), D = I
        p = quadratic_problem(D=(1.0, 1.0), constraint="linear", with_long=False)
        xi = np.array([1.0, 1.0])
        y = np.array([0.25, 0.25])
        nu = np.array([0.75])
        stat, feas, slack = short_term_residuals(p, np.zeros(2), np.zeros(0), y, xi, nu)
        assert stat <= 1e-12 and feas <= 1e-12 and slack <= 1e-12

    def test_missing_multipliers_flagged(self):
        p = quadratic_problem(constraint="linear", with_long=False)
        res = ShortTermResult(y=np.zeros(2), nu=None, kkt_errors=(0.0, 0.0, 0.0))
        with pytest.raises(ProblemError):
            kkt_report(p, LongTermIterate(np.zeros(2), np.zeros(0), 0), [(res, np.zeros(2))],
                       np.zeros(1), expect_multipliers=True)

    def test_empty_batch_rejected(self):
        p = quadratic_problem()
        with pytest.raises(ProblemError):
            kkt_report(p, LongTermIterate(np.zeros(2), np.zeros(1), 0), [], np.zeros(2))

    def test_ellipsoid_point_has_small_slackness(self, cmac_pool, ellipsoid_result):
        from pddssca.apps import cmac_solver
        from pddssca.shortterm import run_short_term

        inst = CmacInstance()
        p = cmac_problem(inst, pool=cmac_pool)
        spec = cmac_solver(p, inst)
        lam = np.append(ellipsoid_result.lam, ellipsoid_result.upsilon)
        states = list(cmac_pool)
        results = [run_short_term(spec, np.zeros(0), lam, xi) for xi in states]
        saa = np.mean([[evaluate_sample(p, i, np.zeros(0), r.y, xi)[0] for i in range(p.m + 1)]
                       for r, xi in zip(results, states)], axis=0)
        rep = kkt_report(p, LongTermIterate(np.zeros(0), lam, 0), list(zip(results, states)), saa)
        assert rep.slackness_long <= 1e-3
