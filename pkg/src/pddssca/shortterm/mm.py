"""Majorization-minimization layers with proximal-linear surrogates."""
from __future__ import annotations

import numpy as np

from ..convex import QuadModel, prox_qcqp_vjp, solve_prox_qcqp
from ..core import ProblemError
from .base import ShortTermLayer
from .gp import weighted_hvp


class MajorizationMinimization(ShortTermLayer):
    """Minimize a linearized-plus-proximal model of the short-term problem.

    The objective and each constraint are replaced at ``y' = y_{j-1}`` by

        value(y') + grad(y').(y - y') + tau * ||y - y'||^2

    and the resulting convex problem is solved exactly over the box. When
    the linearized constraints admit no strictly feasible point the layer
    minimizes the largest constraint model instead.

    Parameters
    ----------
    problem : ProblemDefinition
    tau_obj : float
        Proximal weight of the objective model; must be positive.
    tau_cons : float or array_like
        Proximal weights of the constraint models. A weight no smaller than
        half the curvature of ``h_j`` makes the model an upper bound.
    """

    kind = "mm"
    provides_multipliers = True

    def __init__(self, problem, tau_obj: float = 1.0, tau_cons=1.0):
        super().__init__(problem)
        if tau_obj <= 0:
            raise ProblemError("tau_obj must be positive")
        self.tau_obj = float(tau_obj)
        self.tau_cons = np.broadcast_to(np.asarray(tau_cons, dtype=float), (problem.n,)).copy()
        if np.any(self.tau_cons < 0):
            raise ProblemError("tau_cons must be nonnegative")

    def _models(self, y, x, lam, xi):
        p = self.problem
        val = 0.0
        grad = np.zeros(p.n_y)
        for i in range(p.m + 1):
            w = 1.0 if i == 0 else lam[i - 1]
            v, _, gy = p.sample_fns[i](x, y, xi)
            val += w * v
            grad += w * np.asarray(gy, dtype=float)
        obj = QuadModel(val, grad, self.tau_obj, y)
        cons = []
        for j, fn in enumerate(p.short_fns):
            v, gy = fn(y, xi)
            cons.append(QuadModel(v, gy, self.tau_cons[j], y))
        return obj, cons

    def forward(self, j, y_prev, x, lam, xi):
        box = self.problem.domain_y
        obj, cons = self._models(y_prev, x, lam, xi)
        sol = solve_prox_qcqp(obj, cons, box.lower, box.upper)
        return sol.y.copy(), (sol, obj, cons)

    def backward(self, j, y_prev, x, lam, xi, cache, ybar):
        p = self.problem
        sol, obj, cons = cache
        bars = prox_qcqp_vjp(sol, obj, cons, ybar)
        lin0_bar = bars[0][1]
        yprev_bar = sum(b[2] for b in bars)
        hyy, hxy = weighted_hvp(p, x, lam, y_prev, xi, lin0_bar)
        yprev_bar = yprev_bar + hyy
        for k in range(p.n):
            const_bar, lin_bar, _ = bars[k + 1]
            yprev_bar = yprev_bar + const_bar * cons[k].lin
            if np.any(lin_bar):
                yprev_bar = yprev_bar + p.short_hessian_product(k, y_prev, xi, lin_bar)
        lbar = np.array([p.sample_fns[i](x, y_prev, xi)[2] @ lin0_bar for i in range(1, p.m + 1)])
        return yprev_bar, hxy, lbar

    def multipliers(self, cache):
        if self.problem.n == 0:
            return None
        return cache[0].mu.copy()
