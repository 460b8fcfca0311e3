"""Seeded gradient checks of the unrolled solvers against finite differences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shortterm import run_short_term
from .unroll import fd_oracle, grad_through, relative_error

__all__ = ["GradientCase", "cmac_cases", "thp_cases", "check_case", "gradient_suite"]


@dataclass
class GradientCase:
    problem: object
    spec: object
    x: np.ndarray
    lam: np.ndarray
    xi: object


def cmac_cases(n: int, seed: int = 0):
    """Random prices and gains for the closed-form power layer."""
    from .apps.cmac import CmacInstance, cmac_problem, cmac_solver, sample_gains

    inst = CmacInstance()
    problem = cmac_problem(inst)
    spec = cmac_solver(problem, inst)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(10,)))
    cases = []
    for _ in range(n):
        lam = rng.uniform(0.05, 2.0, size=inst.N + 1)
        xi = sample_gains(rng, 1, inst.N)[0]
        cases.append(GradientCase(problem, spec, np.zeros(0), lam, xi))
    return cases


def thp_cases(n: int, seed: int = 0, M: int = 8, S: int = 2, K: int = 2, J: int = 5,
              min_rate: float = 1e-3):
    """Random phases, prices in ``[1, 3]`` and channels for unrolled WMMSE.

    Draws in which the unrolled solver leaves some user with a rate below
    ``min_rate`` are redrawn: such users have rate gradients of order
    ``1e-7`` or smaller, under the noise floor of central differences on a
    function of unit size.
    """
    from .apps.thp import ThpInstance, sample_channels, thp_problem, thp_solver
    from .shortterm.wmmse import rates, rf_precoder, unpack

    inst = ThpInstance(M=M, S=S, K=K)
    problem = thp_problem(inst)
    spec = thp_solver(problem, inst, J=J)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
    cases = []
    while len(cases) < n:
        theta = rng.uniform(0.0, 2 * np.pi, size=inst.n_x)
        lam = rng.uniform(1.0, 3.0, size=K)
        H = sample_channels(rng, 1, inst)[0]
        y = run_short_term(spec, theta, lam, H).y
        if rates(H @ rf_precoder(theta, M, S), unpack(y, S, K))[0].min() < min_rate:
            continue
        cases.append(GradientCase(problem, spec, theta, lam, H))
    return cases


def check_case(case: GradientCase, step: float = 1e-6) -> float:
    """Largest relative error over every function ``g_i`` and coordinate."""
    result, tape = run_short_term(case.spec, case.x, case.lam, case.xi, record=True)
    worst = 0.0
    for i in range(case.problem.m + 1):
        gx, gl, _ = grad_through(case.problem, i, case.x, case.lam, case.xi, result, tape)
        fx, fl = fd_oracle(case.problem, i, case.x, case.lam, case.xi, case.spec, step=step)
        worst = max(worst, relative_error(gx, fx), relative_error(gl, fl))
    return worst


def gradient_suite(experiments=("thp", "cmac"), seed: int = 0, n_thp: int = 20, n_cmac: int = 50) -> dict:
    """Max relative error per experiment."""
    out = {}
    for name in experiments:
        cases = thp_cases(n_thp, seed) if name == "thp" else cmac_cases(n_cmac, seed)
        out[name] = max(check_case(c) for c in cases)
    return out
