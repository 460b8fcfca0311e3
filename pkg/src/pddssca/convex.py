"""Convex subproblem solvers.

Two layers live here:

* :func:`barrier_minimize`, a log-barrier interior-point method over a box
  with smooth convex inequality constraints. It runs either the objective
  form (minimize ``f_0`` subject to ``f_i <= 0``) or the epigraph form
  (minimize ``alpha`` subject to ``f_i <= alpha``) used as phase I and as the
  feasibility fallback.
* :func:`solve_prox_qcqp`, for problems whose pieces all have the form
  ``const + lin.(z - center) + tau * ||z - center||^2`` with scalar ``tau``.
  It starts from the barrier solution and polishes the active set with a
  Newton step on the multipliers so the result is accurate to machine
  precision. :func:`prox_qcqp_vjp` differentiates that solution implicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ConvergenceError, ProblemError

__all__ = [
    "QuadModel",
    "BarrierResult",
    "barrier_minimize",
    "minimize_convex",
    "ProxSolution",
    "solve_prox_qcqp",
    "prox_qcqp_vjp",
    "project_short_feasible",
    "ProjectionError",
]

PHASE_ONE_MARGIN = 1e-9


class ProjectionError(ProblemError):
    """The short-term feasible set is empty at the requested state."""


class QuadModel:
    """Separable quadratic ``const + lin.(z - center) + sum(curv * (z - center)**2)``.

    ``curv`` may be a scalar or a per-coordinate vector; it must be
    nonnegative so the model is convex.
    """

    def __init__(self, const, lin, curv, center):
        self.const = float(const)
        self.lin = np.asarray(lin, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.curv = np.asarray(curv, dtype=float) if np.ndim(curv) else float(curv)
        if np.any(np.asarray(self.curv) < 0):
            raise ProblemError("quadratic model curvature must be nonnegative")

    def value(self, z):
        d = z - self.center
        return self.const + self.lin @ d + float(np.sum(self.curv * d * d))

    def grad(self, z):
        return self.lin + 2.0 * self.curv * (z - self.center)

    def hess(self, z):
        return np.diag(np.broadcast_to(2.0 * self.curv, z.shape).astype(float))


@dataclass
class BarrierResult:
    z: np.ndarray
    alpha: Optional[float]
    multipliers: np.ndarray
    newton_steps: int
    gap: float


def _interior_start(z0, lo, hi):
    width = hi - lo
    if np.any(width <= 0):
        raise ProblemError("barrier method needs a box with nonempty interior")
    if np.all(z0 > lo) and np.all(z0 < hi):
        return z0.copy()
    margin = np.minimum(1e-4 * width, 1e-3)
    return np.clip(z0, lo + margin, hi - margin)


def barrier_minimize(objective, constraints: Sequence, lo, hi, z0, *, epigraph: bool = False,
                     gap_tol: float = 1e-8, t0: float = 1.0, growth: float = 20.0,
                     max_newton: int = 2000, stop_below: Optional[float] = None) -> BarrierResult:
    """Log-barrier interior-point method over a box.

    Parameters
    ----------
    objective : model with ``value``, ``grad``, ``hess``, or None
        Ignored in epigraph form.
    constraints : sequence of models
        Convex functions ``f_i`` constrained as ``f_i <= 0`` (objective form)
        or ``f_i <= alpha`` (epigraph form).
    lo, hi : ndarray
        Box bounds with ``lo < hi``.
    z0 : ndarray
        Starting point; in objective form it must be strictly feasible.
    epigraph : bool
        Solve the epigraph (phase-I) problem instead.
    gap_tol : float
        Target duality gap ``(number of barrier terms) / t``.
    stop_below : float, optional
        In epigraph form, return as soon as ``alpha < stop_below``.

    Returns
    -------
    BarrierResult
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    z = _interior_start(np.asarray(z0, dtype=float), lo, hi)
    mc = len(constraints)
    if epigraph and mc == 0:
        raise ProblemError("epigraph form needs at least one constraint")
    nv = d + (1 if epigraph else 0)

    def cvals(z):
        return np.array([c.value(z) for c in constraints]) if mc else np.zeros(0)

    if epigraph:
        alpha = float(cvals(z).max()) + 1.0
        v = np.append(z, alpha)
    else:
        v = z.copy()
        if mc and np.any(cvals(z) >= 0):
            raise ProblemError("objective-form start is not strictly feasible")

    def slacks(v):
        z = v[:d]
        f = cvals(z)
        if epigraph:
            f = f - v[d]
        return f, z - lo, hi - z

    def feasible(v):
        f, a, b = slacks(v)
        return np.all(f < 0) and np.all(a > 0) and np.all(b > 0)

    def psi(v, t):
        f, a, b = slacks(v)
        obj = v[d] if epigraph else objective.value(v[:d])
        return t * obj - np.sum(np.log(-f)) - np.sum(np.log(a)) - np.sum(np.log(b))

    def derivs(v, t):
        z = v[:d]
        f, a, b = slacks(v)
        g = np.zeros(nv)
        H = np.zeros((nv, nv))
        if epigraph:
            g[d] = t
        else:
            g[:d] = t * objective.grad(z)
            H[:d, :d] = t * objective.hess(z)
        g[:d] += -1.0 / a + 1.0 / b
        H[np.arange(d), np.arange(d)] += 1.0 / a**2 + 1.0 / b**2
        for i, c in enumerate(constraints):
            gi = np.zeros(nv)
            gi[:d] = c.grad(z)
            if epigraph:
                gi[d] = -1.0
            g += gi / (-f[i])
            H += np.outer(gi, gi) / f[i] ** 2
            H[:d, :d] += c.hess(z) / (-f[i])
        return g, H

    n_bar = mc + 2 * d
    t = t0
    steps = 0
    while True:
        for _ in range(max_newton):
            g, H = derivs(v, t)
            try:
                dv = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                dv = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = float(-g @ dv)
            if dec <= 1e-12 or np.linalg.norm(dv) <= 1e-15 * (1.0 + np.linalg.norm(v)):
                break
            s = 1.0
            while not feasible(v + s * dv) and s > 1e-16:
                s *= 0.5
            if dec > 0.1:
                # damped phase; inside the quadratic region full steps are taken
                base = psi(v, t)
                while psi(v + s * dv, t) > base - 0.25 * s * dec and s > 1e-16:
                    s *= 0.5
            if s <= 1e-16:
                break
            v = v + s * dv
            steps += 1
            if stop_below is not None and epigraph and v[d] < stop_below:
                mult = 1.0 / (t * -slacks(v)[0])
                return BarrierResult(v[:d].copy(), float(v[d]), mult, steps, n_bar / t)
        else:
            raise ConvergenceError("barrier Newton iterations exhausted")
        if n_bar / t < gap_tol:
            break
        t *= growth
    f = slacks(v)[0]
    mult = 1.0 / (t * -f) if mc else np.zeros(0)
    return BarrierResult(v[:d].copy(), float(v[d]) if epigraph else None, mult, steps, n_bar / t)


def minimize_convex(objective, constraints: Sequence, lo, hi, z0, gap_tol: float = 1e-8,
                    margin: float = PHASE_ONE_MARGIN):
    """Minimize ``objective`` subject to ``constraints <= 0`` with phase I.

    Returns
    -------
    result : BarrierResult
    feasible : bool
        False when phase I certifies ``min_z max_i f_i(z) > -margin``; the
        returned result is then the epigraph (feasibility) solution.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    z = _interior_start(np.asarray(z0, dtype=float), lo, hi)
    if constraints and max(c.value(z) for c in constraints) >= -margin:
        ph1 = barrier_minimize(None, constraints, lo, hi, z, epigraph=True,
                               gap_tol=gap_tol, stop_below=-margin)
        if ph1.alpha >= -margin:
            return ph1, False
        z = ph1.z
    return barrier_minimize(objective, constraints, lo, hi, z, gap_tol=gap_tol), True


@dataclass
class ProxSolution:
    """Solution of a scalar-curvature prox QCQP.

    ``mode`` is ``"objective"`` or ``"feasibility"`` (epigraph fallback);
    ``active`` indexes the constraints with positive multipliers and
    ``free`` marks coordinates strictly inside the box.
    """

    y: np.ndarray
    mu: np.ndarray
    alpha: float
    mode: str
    active: np.ndarray
    free: np.ndarray
    polished: bool


def _closed_form(models, weights, lo, hi):
    wt = sum(w * m.curv for w, m in zip(weights, models))
    num = sum(w * (2.0 * m.curv * m.center - m.lin) for w, m in zip(weights, models))
    with np.errstate(divide="ignore", invalid="ignore"):
        yhat = num / (2.0 * wt)
    return np.clip(yhat, lo, hi), yhat, wt


def _polish(obj, cons, lo, hi, mu0, alpha0, vals0, epigraph, tol=1e-12):
    """Newton refinement of the multipliers on the identified active set."""
    w0 = 0.0 if epigraph else 1.0
    nc = len(cons)
    # complementary pair: the larger of (mu, -slack) tells active from inactive
    act = np.flatnonzero(mu0 > -(vals0 - alpha0))
    mu = np.zeros(nc)
    mu[act] = mu0[act]
    alpha = alpha0 if epigraph else 0.0
    if epigraph and act.size:
        mu[act] /= mu[act].sum()
    models = [obj] + list(cons)
    for _ in range(50):
        weights = np.concatenate([[w0], mu])
        y, yhat, wt = _closed_form(models, weights, lo, hi)
        if wt <= 0:
            return None
        free = (yhat > lo) & (yhat < hi)
        r = np.array([cons[i].value(y) - alpha for i in act])
        if epigraph:
            r = np.append(r, 1.0 - mu[act].sum())
        if np.linalg.norm(r) <= tol * (1.0 + abs(alpha) + max((abs(cons[i].const) for i in act), default=0.0)):
            break
        na = act.size
        Jm = np.zeros((na + (1 if epigraph else 0), na + (1 if epigraph else 0)))
        grads = [cons[i].grad(y) for i in act]
        dyhat = [-(cons[i].grad(yhat)) / (2.0 * wt) for i in act]
        for p, gi in enumerate(grads):
            for q, dq in enumerate(dyhat):
                Jm[p, q] = gi @ np.where(free, dq, 0.0)
            if epigraph:
                Jm[p, na] = -1.0
        if epigraph:
            Jm[na, :na] = -1.0
        try:
            step = np.linalg.solve(Jm, -r)
        except np.linalg.LinAlgError:
            return None
        mu[act] += step[:na]
        if epigraph:
            alpha += step[na]
    else:
        return None
    weights = np.concatenate([[w0], mu])
    y, yhat, _ = _closed_form(models, weights, lo, hi)
    free = (yhat > lo) & (yhat < hi)
    if np.any(mu[act] < -1e-12):
        return None
    vals = np.array([c.value(y) for c in cons])
    slack_tol = 1e-9 * (1.0 + np.abs([c.const for c in cons]))
    if np.any(vals - alpha > slack_tol):
        return None
    return y, np.maximum(mu, 0.0), alpha, act, free


def solve_prox_qcqp(obj: QuadModel, cons: Sequence[QuadModel], lo, hi, gap_tol: float = 1e-10,
                    allow_fallback: bool = True) -> ProxSolution:
    """Minimize ``obj`` subject to ``cons <= 0`` over a box, all scalar-curvature.

    When the constraints cannot be met strictly, the epigraph problem
    ``min alpha s.t. cons <= alpha`` is solved instead and flagged with
    ``mode="feasibility"``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if obj.curv <= 0:
        raise ProblemError("prox objective needs positive curvature")
    cons = list(cons)
    if not cons:
        y, yhat, _ = _closed_form([obj], [1.0], lo, hi)
        return ProxSolution(y, np.zeros(0), 0.0, "objective", np.zeros(0, dtype=int),
                            (yhat > lo) & (yhat < hi), True)
    y0, _, _ = _closed_form([obj], [1.0], lo, hi)
    vals = np.array([c.value(y0) for c in cons])
    if np.all(vals <= 0):
        yhat = _closed_form([obj], [1.0], lo, hi)[1]
        return ProxSolution(y0, np.zeros(len(cons)), 0.0, "objective",
                            np.zeros(0, dtype=int), (yhat > lo) & (yhat < hi), True)
    span = np.maximum(hi - lo, 1e-300)
    # the barrier needs an interior; pad degenerate boxes
    blo, bhi = lo - 1e-9 * (span == 0), hi + 1e-9 * (span == 0)
    res, feasible = minimize_convex(obj, cons, blo, bhi, y0, gap_tol=gap_tol)
    if not feasible:
        if not allow_fallback:
            raise ProjectionError("constraint set is empty")
    epi = not feasible
    alpha0 = res.alpha if epi else 0.0
    vals0 = np.array([c.value(res.z) for c in cons])
    out = _polish(obj, cons, lo, hi, res.multipliers, alpha0, vals0, epi)
    if out is None:
        z = np.clip(res.z, lo, hi)
        return ProxSolution(z, res.multipliers, res.alpha if epi else 0.0,
                            "feasibility" if epi else "objective",
                            np.flatnonzero(res.multipliers > 1e-8), (z > lo) & (z < hi), False)
    y, mu, alpha, act, free = out
    return ProxSolution(y, mu, float(alpha), "feasibility" if epi else "objective", act, free, True)


def prox_qcqp_vjp(sol: ProxSolution, obj: QuadModel, cons: Sequence[QuadModel], ybar):
    """Pull a cotangent on the solution back to the model parameters.

    Returns
    -------
    list of ``(const_bar, lin_bar, center_bar)``
        One entry per model, objective first. Curvatures are treated as
        fixed parameters.
    """
    ybar = np.asarray(ybar, dtype=float)
    models = [obj] + list(cons)
    epi = sol.mode == "feasibility"
    w0 = 0.0 if epi else 1.0
    weights = np.concatenate([[w0], sol.mu])
    y = sol.y
    f = np.flatnonzero(sol.free)
    act = sol.active
    nf, na = f.size, act.size
    size = nf + na + (1 if epi else 0)
    out = [(0.0, np.zeros_like(y), np.zeros_like(y)) for _ in models]
    if size == 0:
        return out
    wt = sum(w * m.curv for w, m in zip(weights, models))
    K = np.zeros((size, size))
    K[np.arange(nf), np.arange(nf)] = 2.0 * wt
    grads = [cons[i].grad(y) for i in act]
    for p, gi in enumerate(grads):
        K[:nf, nf + p] = gi[f]
        K[nf + p, :nf] = gi[f]
        if epi:
            K[nf + p, nf + na] = -1.0
            K[nf + na, nf + p] = -1.0
    rhs = np.zeros(size)
    rhs[:nf] = ybar[f]
    try:
        v = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        v = np.linalg.lstsq(K, rhs, rcond=None)[0]
    a = np.zeros_like(y)
    a[f] = v[:nf]
    b = np.zeros(len(cons))
    b[act] = v[nf:nf + na]
    for k, mdl in enumerate(models):
        wk = weights[k]
        bk = 0.0 if k == 0 else b[k - 1]
        dk = y - mdl.center
        const_bar = -bk
        lin_bar = -wk * a - bk * dk
        center_bar = 2.0 * mdl.curv * wk * a + bk * (mdl.lin + 2.0 * mdl.curv * dk)
        out[k] = (const_bar, lin_bar, center_bar)
    return out


def linearized_constraints(problem, y, xi):
    """Affine models of the short-term constraints at ``y``."""
    models = []
    for fn in problem.short_fns:
        val, grad = fn(y, xi)
        models.append(QuadModel(val, grad, 0.0, y.copy()))
    return models


class _ShortConstraint:
    """``h_j(., xi)`` with the interface the barrier method expects."""

    def __init__(self, problem, j, xi):
        self.problem, self.j, self.xi = problem, j, xi

    def value(self, y):
        return float(self.problem.short_fns[self.j](y, self.xi)[0])

    def grad(self, y):
        return np.asarray(self.problem.short_fns[self.j](y, self.xi)[1], dtype=float)

    def hess(self, y):
        eye = np.eye(y.size)
        H = np.column_stack([self.problem.short_hessian_product(self.j, y, self.xi, e) for e in eye])
        return 0.5 * (H + H.T)


def project_short_feasible(problem, z, xi, gap_tol: float = 1e-12, return_solution: bool = False):
    """Euclidean projection onto ``{y in box : h_j(y, xi) <= 0}``.

    The projection is computed by the barrier method on the exact
    constraints, then refined by one projection onto the constraints
    linearized at that point. The refinement fixes the active set and the
    multipliers used by the reverse pass; for affine constraints it is the
    exact projection.
    """
    z = np.asarray(z, dtype=float)
    box = problem.domain_y
    y = box.project(z)
    if problem.n == 0:
        return (y, None, None) if return_solution else y
    obj = QuadModel(0.0, np.zeros_like(z), 0.5, z)
    if np.any(problem.short_values(y, xi) > 0):
        exact = [_ShortConstraint(problem, j, xi) for j in range(problem.n)]
        span = box.upper - box.lower
        blo, bhi = box.lower - 1e-9 * (span == 0), box.upper + 1e-9 * (span == 0)
        res, feasible = minimize_convex(obj, exact, blo, bhi, y, gap_tol=gap_tol)
        if not feasible:
            raise ProjectionError("constraint set is empty")
        y = box.project(res.z)
    cons = linearized_constraints(problem, y, xi)
    sol = solve_prox_qcqp(obj, cons, box.lower, box.upper, allow_fallback=False)
    if return_solution:
        return sol.y, sol, cons
    return sol.y


def projection_vjp(problem, xi, sol: ProxSolution, ybar):
    """Transposed Jacobian of :func:`project_short_feasible` applied to ``ybar``.

    Differentiates the projection's optimality system
    ``y - z + sum_j mu_j grad h_j(y) = 0``, ``h_j(y) = 0`` for active ``j``,
    on the coordinates strictly inside the box, using the exact constraint
    curvature. Constraints with zero multiplier and clipped coordinates are
    treated as fixed.
    """
    ybar = np.asarray(ybar, dtype=float)
    y = sol.y
    free = np.asarray(sol.free, dtype=bool)
    act = [int(j) for j in sol.active if sol.mu[j] > 0.0]
    zbar = np.zeros_like(ybar)
    if not free.any():
        return zbar
    hess = np.eye(y.size)
    for j in act:
        cols = [problem.short_hessian_product(j, y, xi, e) for e in np.eye(y.size)]
        hess = hess + sol.mu[j] * 0.5 * (np.column_stack(cols) + np.vstack(cols))
    grads = np.array([np.asarray(problem.short_fns[j](y, xi)[1], dtype=float)[free] for j in act])
    nf, na = int(free.sum()), len(act)
    kkt = np.zeros((nf + na, nf + na))
    kkt[:nf, :nf] = hess[np.ix_(free, free)]
    if na:
        kkt[:nf, nf:] = grads.T
        kkt[nf:, :nf] = grads
    rhs = np.concatenate([ybar[free], np.zeros(na)])
    try:
        sol_vec = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        # dependent active gradients: the minimum-norm solution keeps the primal part unique
        sol_vec = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    zbar[free] = sol_vec[:nf]
    return zbar
