"""Gradient projection layers."""
from __future__ import annotations

import numpy as np

from ..convex import project_short_feasible, projection_vjp
from ..core import Box, ProblemDefinition, ProblemError, weighted_short_gradient
from .base import ShortTermLayer


def weighted_hvp(problem, x, lam, y, xi, v):
    """``(H_yy v, H_xy v)`` of ``g_0 + sum_i lam_i g_i``."""
    hyy = np.zeros(problem.n_y)
    hxy = np.zeros(problem.n_x)
    for i in range(problem.m + 1):
        w = 1.0 if i == 0 else lam[i - 1]
        if w == 0.0:
            continue
        a, b = problem.hessian_products(i, x, y, xi, v)
        hyy += w * a
        hxy += w * b
    return hyy, hxy


def estimate_lipschitz(problem, x, lam, y, xi, iters: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm of the short-term Hessian."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(problem.n_y)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        hv = weighted_hvp(problem, x, lam, y, xi, v)[0]
        nrm = np.linalg.norm(hv)
        if nrm == 0.0:
            return 0.0
        if abs(nrm - est) <= 1e-10 * nrm:
            est = nrm
            break
        est = nrm
        v = hv / nrm
    return float(est)


class GradientProjection(ShortTermLayer):
    """``y_j = Proj[y_{j-1} - alpha_j * grad_y g_s(y_{j-1})]`` onto the feasible set.

    Parameters
    ----------
    problem : ProblemDefinition
    alpha0 : float, optional
        Base step. When omitted it is ``1 / L`` with ``L`` a power-iteration
        estimate of the Hessian norm at ``reference``. The estimate is taken
        once so the layer map stays a fixed smooth function of ``(x, lam)``.
    schedule : {"diminishing", "constant"}
        ``alpha_j = alpha0 / sqrt(j)`` or ``alpha_j = alpha0``.
    trainable : int, optional
        When set to ``J``, the step vectors ``alpha_1 .. alpha_J`` (each of
        length ``n_y``) are read from the last ``J * n_y`` entries of ``x``;
        build the problem with :func:`with_trainable_steps`.
    reference : tuple, optional
        ``(x, lam, y, xi)`` at which the step is calibrated.
    """

    kind = "gp"
    provides_multipliers = True

    def __init__(self, problem: ProblemDefinition, alpha0=None, schedule: str = "diminishing",
                 trainable=None, reference=None):
        super().__init__(problem)
        if schedule not in ("diminishing", "constant"):
            raise ProblemError(f"unknown step schedule {schedule!r}")
        self.schedule = schedule
        self.trainable = trainable
        if trainable is None:
            if alpha0 is None:
                if reference is None:
                    raise ProblemError("either alpha0 or a reference point is required")
                lip = estimate_lipschitz(problem, *reference)
                if lip <= 0:
                    raise ProblemError("Hessian estimate vanished; pass alpha0")
                alpha0 = 1.0 / lip
            if alpha0 <= 0:
                raise ProblemError("alpha0 must be positive")
        self.alpha0 = alpha0

    def _steps(self, j, x):
        if self.trainable is not None:
            ny = self.problem.n_y
            start = self.problem.n_x - self.trainable * ny + (j - 1) * ny
            return x[start:start + ny]
        a = self.alpha0 / np.sqrt(j) if self.schedule == "diminishing" else self.alpha0
        return np.full(self.problem.n_y, a)

    def forward(self, j, y_prev, x, lam, xi):
        p = self.problem
        alpha = self._steps(j, x)
        c, _ = weighted_short_gradient(p, x, lam, y_prev, xi)
        z = y_prev - alpha * c
        if p.n == 0:
            return p.domain_y.project(z), (z, None, None, c, alpha)
        y, sol, cons = project_short_feasible(p, z, xi, return_solution=True)
        return y, (z, sol, cons, c, alpha)

    def backward(self, j, y_prev, x, lam, xi, cache, ybar):
        p = self.problem
        z, sol, cons, c, alpha = cache
        if sol is None:
            free = (z > p.domain_y.lower) & (z < p.domain_y.upper)
            zbar = np.where(free, ybar, 0.0)
        else:
            zbar = projection_vjp(p, xi, sol, ybar)
        v = alpha * zbar
        hyy, hxy = weighted_hvp(p, x, lam, y_prev, xi, v)
        yprev_bar = zbar - hyy
        xbar = -hxy
        lbar = np.array([-(p.sample_fns[i](x, y_prev, xi)[2] @ v) for i in range(1, p.m + 1)])
        if self.trainable is not None:
            ny = p.n_y
            start = p.n_x - self.trainable * ny + (j - 1) * ny
            xbar = xbar.copy()
            xbar[start:start + ny] += -zbar * c
        return yprev_bar, xbar, lbar

    def multipliers(self, cache):
        if self.problem.n == 0:
            return None
        z, sol, cons, c, alpha = cache
        return sol.mu / float(np.mean(alpha))


def with_trainable_steps(problem: ProblemDefinition, J: int, low: float, high: float) -> ProblemDefinition:
    """Append ``J`` per-layer step vectors to ``x``.

    The returned problem has ``n_x + J * n_y`` long-term variables; the
    sample functions ignore the appended entries, which only enter the
    solution through the gradient-projection layers.
    """
    if not 0 < low < high:
        raise ProblemError("step bounds must satisfy 0 < low < high")
    core = problem.n_x
    extra = J * problem.n_y

    def wrap(fn):
        def g(x, y, xi):
            v, gx, gy = fn(x[:core], y, xi)
            return v, np.concatenate([np.asarray(gx, dtype=float), np.zeros(extra)]), gy
        return g

    second = None
    if problem.second_order is not None:
        def second(i, x, y, xi, v):
            hyy, hxy = problem.second_order(i, x[:core], y, xi, v)
            return hyy, np.concatenate([np.asarray(hxy, dtype=float), np.zeros(extra)])

    box = Box(np.concatenate([problem.domain_x.lower, np.full(extra, low)]),
              np.concatenate([problem.domain_x.upper, np.full(extra, high)]))
    return ProblemDefinition(
        n_x=core + extra, n_y=problem.n_y, m=problem.m, n=problem.n, domain_x=box,
        domain_y=problem.domain_y, sample_fns=[wrap(f) for f in problem.sample_fns],
        short_fns=problem.short_fns, sampler=problem.sampler, lambda_cap=problem.lambda_cap,
        second_order=second, short_second_order=problem.short_second_order,
        objective_sign=problem.objective_sign, name=problem.name + "+steps")
