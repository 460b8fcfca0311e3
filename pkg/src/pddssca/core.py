"""Problem definitions and shared numerical contracts.

A two-timescale stochastic program couples long-term variables ``x`` (fixed
across many random states) with short-term variables ``y`` that are chosen
per state ``xi``. Constraints on the expectation of ``g_i`` are priced by
long-term multipliers ``lam``; the short-term problem for a given state is

    minimize   g_0(x, y, xi) + sum_i lam_i g_i(x, y, xi)
    subject to h_j(y, xi) <= 0,  y in the short-term box.

This module holds the data types shared by every other module: boxes, the
problem definition, the long-term iterate, the step-size schedule, the
KKT report, and the per-sample evaluator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Box",
    "ProblemDefinition",
    "LongTermIterate",
    "StepSchedule",
    "KktReport",
    "ProblemError",
    "ConvergenceError",
    "evaluate_sample",
    "step_values",
    "weighted_short_gradient",
    "short_term_residuals",
    "kkt_report",
]


class ProblemError(ValueError):
    """Raised for inconsistent problem data or out-of-range indices."""


class ConvergenceError(RuntimeError):
    """Raised when an inner solver exhausts its iteration budget."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lower <= z <= upper`` with finite bounds.

    Parameters
    ----------
    lower, upper : array_like
        Bounds of equal length. Every bound must be finite and
        ``lower <= upper``.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ProblemError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ProblemError("box bounds must be finite")
        if np.any(lo > hi):
            raise ProblemError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim: int, lower: float, upper: float) -> "Box":
        return cls(np.full(dim, lower), np.full(dim, upper))

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, z):
        return np.clip(z, self.lower, self.upper)

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


SampleFn = Callable[[np.ndarray, np.ndarray, Any], tuple]
ShortFn = Callable[[np.ndarray, Any], tuple]


@dataclass(frozen=True)
class ProblemDefinition:
    """A two-timescale stochastic program.

    Parameters
    ----------
    n_x, n_y : int
        Long-term and short-term dimensions (``n_y >= 1``).
    m : int
        Number of long-term expectation constraints.
    n : int
        Number of short-term constraints.
    domain_x, domain_y : Box
        Compact boxes for ``x`` and ``y``.
    sample_fns : sequence of callables, length ``m + 1``
        ``sample_fns[i](x, y, xi) -> (value, grad_x, grad_y)``; index 0 is
        the objective.
    short_fns : sequence of callables, length ``n``
        ``short_fns[j](y, xi) -> (value, grad_y)``, each convex in ``y``.
    sampler : callable
        ``sampler(rng, size) -> list of states``.
    lambda_cap : float
        Upper bound of the multiplier box ``[0, lambda_cap]^m``.
    second_order : callable, optional
        ``second_order(i, x, y, xi, v) -> (hyy_v, hxy_v)`` giving the
        transposed Jacobians of ``(x, y) -> grad_y g_i`` applied to ``v``.
        When absent a central difference of ``sample_fns`` is used.
    short_second_order : callable, optional
        ``short_second_order(j, y, xi, v) -> hess_y(h_j) @ v``.
    objective_sign : float
        Sign applied when reporting the objective (``-1`` when ``g_0`` is a
        negated utility).
    name : str
    """

    n_x: int
    n_y: int
    m: int
    n: int
    domain_x: Box
    domain_y: Box
    sample_fns: Sequence[SampleFn]
    short_fns: Sequence[ShortFn] = ()
    sampler: Optional[Callable[[np.random.Generator, int], list]] = None
    lambda_cap: float = 1e4
    second_order: Optional[Callable] = None
    short_second_order: Optional[Callable] = None
    objective_sign: float = 1.0
    name: str = "problem"

    def __post_init__(self):
        if self.n_x < 0 or self.n_y < 1 or self.m < 0 or self.n < 0:
            raise ProblemError("dimensions must satisfy n_x >= 0, n_y >= 1, m >= 0, n >= 0")
        if self.domain_x.dim != self.n_x:
            raise ProblemError(f"domain_x has dimension {self.domain_x.dim}, expected {self.n_x}")
        if self.domain_y.dim != self.n_y:
            raise ProblemError(f"domain_y has dimension {self.domain_y.dim}, expected {self.n_y}")
        if len(self.sample_fns) != self.m + 1:
            raise ProblemError(f"expected {self.m + 1} sample functions, got {len(self.sample_fns)}")
        if len(self.short_fns) != self.n:
            raise ProblemError(f"expected {self.n} short-term constraints, got {len(self.short_fns)}")
        if not (np.isfinite(self.lambda_cap) and self.lambda_cap > 0):
            raise ProblemError("lambda_cap must be positive and finite")

    @property
    def lambda_box(self) -> Box:
        return Box.uniform(self.m, 0.0, self.lambda_cap)

    def sample(self, rng: np.random.Generator, size: int) -> list:
        if self.sampler is None:
            raise ProblemError(f"problem {self.name!r} has no sampler")
        return list(self.sampler(rng, size))

    def short_values(self, y, xi) -> np.ndarray:
        return np.array([fn(y, xi)[0] for fn in self.short_fns], dtype=float)

    def hessian_products(self, i: int, x, y, xi, v, eps: float = 1e-6):
        """Return ``(hyy_v, hxy_v)`` for ``g_i`` (analytic or finite-difference)."""
        if self.second_order is not None:
            hyy, hxy = self.second_order(i, x, y, xi, v)
            return np.asarray(hyy, dtype=float), np.asarray(hxy, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros(self.n_y), np.zeros(self.n_x)
        h = eps * max(1.0, np.linalg.norm(y)) / nv
        _, gxp, gyp = self.sample_fns[i](x, y + h * v, xi)
        _, gxm, gym = self.sample_fns[i](x, y - h * v, xi)
        return (np.asarray(gyp) - gym) / (2 * h), (np.asarray(gxp) - gxm) / (2 * h)

    def short_hessian_product(self, j: int, y, xi, v, eps: float = 1e-6):
        if self.short_second_order is not None:
            return np.asarray(self.short_second_order(j, y, xi, v), dtype=float)
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros(self.n_y)
        h = eps * max(1.0, np.linalg.norm(y)) / nv
        return (np.asarray(self.short_fns[j](y + h * v, xi)[1])
                - self.short_fns[j](y - h * v, xi)[1]) / (2 * h)


@dataclass(frozen=True)
class LongTermIterate:
    """Long-term iterate ``(x, lam)`` at outer iteration ``t``."""

    x: np.ndarray
    lam: np.ndarray
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "lam", np.atleast_1d(np.asarray(self.lam, dtype=float)))
        if self.t < 0:
            raise ProblemError("iteration counter must be nonnegative")

    def check(self, problem: ProblemDefinition, tol: float = 1e-12) -> None:
        if self.x.size != problem.n_x or self.lam.size != problem.m:
            raise ProblemError("iterate dimensions do not match the problem")
        if not problem.domain_x.contains(self.x, tol):
            raise ProblemError("x lies outside its domain")
        if np.any(self.lam < -tol) or np.any(self.lam > problem.lambda_cap + tol):
            raise ProblemError("lam lies outside [0, lambda_cap]")


@dataclass(frozen=True)
class StepSchedule:
    """Diminishing step sizes ``rho_t`` (trackers) and ``gamma_t`` (averaging).

    ``rho_t = rho_scale / (rho_shift + t) ** rho_exponent`` and
    ``gamma_t = gamma_scale / (gamma_shift + t)``, both clipped to ``(0, 1]``.
    """

    rho_scale: float = 10.0
    rho_shift: float = 10.0
    rho_exponent: float = 0.9
    gamma_scale: float = 15.0
    gamma_shift: float = 15.0

    def __post_init__(self):
        if not 0.5 < self.rho_exponent <= 1.0:
            raise ProblemError("rho exponent must lie in (0.5, 1]")
        if min(self.rho_scale, self.rho_shift, self.gamma_scale, self.gamma_shift) <= 0:
            raise ProblemError("schedule constants must be positive")


def step_values(schedule: StepSchedule, t: int) -> tuple[float, float]:
    """Return ``(rho_t, gamma_t)`` for outer iteration ``t >= 0``."""
    if t < 0:
        raise ProblemError("iteration index must be nonnegative")
    rho = schedule.rho_scale / (schedule.rho_shift + t) ** schedule.rho_exponent
    gamma = schedule.gamma_scale / (schedule.gamma_shift + t)
    return min(1.0, rho), min(1.0, gamma)


@dataclass(frozen=True)
class KktReport:
    """KKT residuals of the short-term and long-term problems.

    Short-term fields are averages (stationarity) or maxima (feasibility,
    slackness) over the evaluation batch. ``feasibility_long`` holds the
    sample-average constraint values ``f_i`` for ``i = 1..m``.
    """

    stationarity_short: float
    feasibility_short: float
    slackness_short: float
    stationarity_long: float
    feasibility_long: np.ndarray
    slackness_long: float

    def as_dict(self) -> dict:
        return {
            "stationarity_short": float(self.stationarity_short),
            "feasibility_short": float(self.feasibility_short),
            "slackness_short": float(self.slackness_short),
            "stationarity_long": float(self.stationarity_long),
            "feasibility_long": [float(v) for v in np.atleast_1d(self.feasibility_long)],
            "slackness_long": float(self.slackness_long),
        }


def _check_index(problem: ProblemDefinition, i: int) -> None:
    if not 0 <= i <= problem.m:
        raise ProblemError(f"constraint index {i} outside 0..{problem.m}")


def evaluate_sample(problem: ProblemDefinition, i: int, x, y, xi):
    """Evaluate ``g_i`` at one sample together with its partial gradients.

    Returns
    -------
    value : float
    grad_x : ndarray, shape (n_x,)
    grad_y : ndarray, shape (n_y,)
    """
    _check_index(problem, i)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != problem.n_x or y.size != problem.n_y:
        raise ProblemError("x or y has the wrong dimension")
    value, gx, gy = problem.sample_fns[i](x, y, xi)
    return float(value), np.asarray(gx, dtype=float).reshape(problem.n_x), \
        np.asarray(gy, dtype=float).reshape(problem.n_y)


def weighted_short_gradient(problem: ProblemDefinition, x, lam, y, xi):
    """Gradient in ``y`` of ``g_0 + sum_i lam_i g_i`` and the per-term pieces.

    Returns
    -------
    total : ndarray, shape (n_y,)
    parts : list of ndarray
        ``grad_y g_i`` for ``i = 0..m``.
    """
    parts = [evaluate_sample(problem, i, x, y, xi)[2] for i in range(problem.m + 1)]
    total = parts[0].copy()
    for i in range(problem.m):
        total += lam[i] * parts[i + 1]
    return total, parts


def short_term_residuals(problem: ProblemDefinition, x, lam, y, xi, nu=None):
    """Short-term KKT residuals ``(stationarity, feasibility, slackness)``.

    With multipliers ``nu`` the stationarity residual is the projected
    gradient of the Lagrangian onto the box. Without them it is the
    fixed-point residual of one unit projected-gradient step onto the full
    feasible set, and slackness is reported as zero.
    """
    y = np.asarray(y, dtype=float)
    grad, _ = weighted_short_gradient(problem, x, lam, y, xi)
    hvals = problem.short_values(y, xi)
    feas = max(0.0, float(hvals.max())) if problem.n else 0.0
    if nu is not None and problem.n:
        nu = np.asarray(nu, dtype=float)
        for j in range(problem.n):
            grad = grad + nu[j] * problem.short_fns[j](y, xi)[1]
        stat = float(np.linalg.norm(y - problem.domain_y.project(y - grad)))
        slack = float(np.max(np.abs(nu * hvals)))
        return stat, feas, slack
    if problem.n == 0:
        stat = float(np.linalg.norm(y - problem.domain_y.project(y - grad)))
        return stat, feas, 0.0
    from .convex import project_short_feasible

    proj = project_short_feasible(problem, y - grad, xi)
    return float(np.linalg.norm(y - proj)), feas, 0.0


def kkt_report(problem: ProblemDefinition, iterate: LongTermIterate, batch, saa_f,
               expect_multipliers: bool = False) -> KktReport:
    """Assemble a :class:`KktReport` from an evaluation batch.

    Parameters
    ----------
    problem : ProblemDefinition
    iterate : LongTermIterate
    batch : sequence of ``(ShortTermResult, xi)``
    saa_f : array_like, shape (m + 1,) or (m,)
        Sample-average values of ``g_i``; when ``m + 1`` entries are given
        the objective entry is dropped.
    expect_multipliers : bool
        If true, a result without short-term multipliers is an error.
    """
    if len(batch) == 0:
        raise ProblemError("evaluation batch is empty")
    x, lam = iterate.x, iterate.lam
    e1, e2, e3 = [], [], []
    grad_x = np.zeros(problem.n_x)
    for result, xi in batch:
        if result.nu is None and problem.n and expect_multipliers:
            raise ProblemError("short-term solver promised multipliers but returned none")
        s, f, c = short_term_residuals(problem, x, lam, result.y, xi, result.nu)
        e1.append(s)
        e2.append(f)
        e3.append(c)
        for i in range(problem.m + 1):
            w = 1.0 if i == 0 else lam[i - 1]
            grad_x += w * evaluate_sample(problem, i, x, result.y, xi)[1]
    grad_x /= len(batch)
    stat_long = float(np.linalg.norm(x - problem.domain_x.project(x - grad_x))) if problem.n_x else 0.0
    saa_f = np.atleast_1d(np.asarray(saa_f, dtype=float))
    if saa_f.size == problem.m + 1:
        saa_f = saa_f[1:]
    if saa_f.size != problem.m:
        raise ProblemError("saa_f has the wrong length")
    slack_long = float(np.max(np.abs(lam * saa_f))) if problem.m else 0.0
    return KktReport(
        stationarity_short=float(np.mean(e1)),
        feasibility_short=float(np.max(e2)),
        slackness_short=float(np.max(e3)),
        stationarity_long=stat_long,
        feasibility_long=saa_f,
        slackness_long=slack_long,
    )
