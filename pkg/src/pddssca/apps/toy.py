"""A scalar problem with a known optimum, used for smoke tests and the CLI.

With ``y`` chosen per state to minimize ``(y - x - xi)^2 / 2 + lam * (y - 1)``
the short-term solution is ``y = x + xi - lam``, and the long-term problem

    minimize (x - 2)^2 / 2 + lam^2 / 2   subject to  x - lam <= 1

has the optimum ``x = 1.5, lam = 0.5`` (the multiplier of the long-term
constraint equals ``lam`` itself). Without the constraint the optimum is
``x = 2``.
"""
from __future__ import annotations

import numpy as np

from ..core import Box, ProblemDefinition
from ..shortterm import GradientProjection, ShortTermSolverSpec
from ..shortterm.base import CenterInit

TOY_OPTIMUM = {"constrained": (1.5, 0.5), "unconstrained": (2.0,)}


def toy_problem(constrained: bool = True, noise: float = 0.5) -> ProblemDefinition:
    def g0(x, y, xi):
        r = y[0] - x[0] - xi
        return 0.5 * (x[0] - 2.0) ** 2 + 0.5 * r**2, np.array([x[0] - 2.0 - r]), np.array([r])

    def g1(x, y, xi):
        return y[0] - 1.0, np.zeros(1), np.ones(1)

    def second_order(i, x, y, xi, v):
        if i == 0:
            return np.array(v, dtype=float), -np.array(v, dtype=float)
        return np.zeros(1), np.zeros(1)

    def sampler(rng, size):
        return list(noise * rng.standard_normal(size))

    fns = [g0, g1] if constrained else [g0]
    return ProblemDefinition(
        n_x=1, n_y=1, m=len(fns) - 1, n=0,
        domain_x=Box.uniform(1, -5.0, 5.0), domain_y=Box.uniform(1, -10.0, 10.0),
        sample_fns=fns, sampler=sampler, second_order=second_order,
        name="toy" if constrained else "toy-unconstrained",
    )


def toy_solver(problem: ProblemDefinition, J: int = 1) -> ShortTermSolverSpec:
    """Unit-step projected gradient: exact after the first layer."""
    layer = GradientProjection(problem, alpha0=1.0, schedule="constant")
    return ShortTermSolverSpec(J=J, layer=layer, init_rule=CenterInit(problem),
                               layer_params={"alpha0": 1.0})


def toy_initial(problem: ProblemDefinition):
    return np.zeros(1), np.ones(problem.m)
