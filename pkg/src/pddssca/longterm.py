"""The outer stochastic successive convex approximation loop.

Each outer iteration draws a mini-batch of states, runs the unrolled
short-term solver on every state, differentiates through it, updates the
trackers, and minimizes the convex surrogate problem

    minimize fbar_0(z)  subject to  fbar_i(z) <= 0,  z = (x, lam) in the box.

When the surrogate constraints admit no strictly feasible point the
iteration instead minimizes ``max_i fbar_i`` (a feasibility update). The
new iterate moves a fraction ``gamma_t`` toward the surrogate minimizer.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .convex import PHASE_ONE_MARGIN, barrier_minimize, minimize_convex
from .core import (KktReport, LongTermIterate, ProblemDefinition, ProblemError, StepSchedule,
                   evaluate_sample, kkt_report, step_values)
from .shortterm import ShortTermSolverSpec, run_short_term
from .surrogate import SurrogateTracker, build_surrogate, initial_tracker, update_trackers
from .unroll import vjp

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "ConvexSubproblem",
    "TraceRecord",
    "RunResult",
    "BatchEvaluation",
    "evaluate_batch",
    "solve_objective_update",
    "solve_feasibility_update",
    "outer_step",
    "averaged_iterate",
    "run",
    "iteration_rng",
    "report_rng",
]


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the outer loop.

    Parameters
    ----------
    B : int
        Mini-batch size.
    T_max : int
        Iteration cap.
    tau : float
        Proximal weight of every surrogate.
    schedule : StepSchedule
    stop_tolerance : float
        Stop once ``||dx|| + ||dlam||`` stays at or below this value for
        ``stop_window`` consecutive iterations; zero disables the test.
    stop_window : int
    workers : int
        Threads used for the per-sample short-term solves. Results do not
        depend on it.
    seed : int
    gap_tol : float
        Duality-gap target of the surrogate solver.
    report_batch : int
        States in the final evaluation batch.
    record_time : bool
        Write wall-clock milliseconds into the trace; when false the column
        is zero so traces are reproducible byte for byte.
    time_budget : float
        Stop after the iteration that pushes elapsed wall-clock seconds past
        this value; zero disables it. A nonzero budget makes the iteration
        count machine dependent.
    """

    B: int = 20
    T_max: int = 1000
    tau: float = 1.0
    schedule: StepSchedule = field(default_factory=StepSchedule)
    stop_tolerance: float = 0.0
    stop_window: int = 10
    workers: int = 1
    seed: int = 0
    gap_tol: float = 1e-8
    report_batch: int = 200
    record_time: bool = False
    time_budget: float = 0.0

    def __post_init__(self):
        if self.B < 1 or self.T_max < 0 or self.workers < 1 or self.stop_window < 1:
            raise ProblemError("B, workers and stop_window must be positive, T_max nonnegative")
        if self.tau <= 0:
            raise ProblemError("tau must be positive")
        if self.time_budget < 0:
            raise ProblemError("time_budget must be nonnegative")
        if self.stop_tolerance < 0 or self.gap_tol <= 0 or self.report_batch < 1:
            raise ProblemError("invalid tolerance or report batch size")


@dataclass
class ConvexSubproblem:
    """Surrogate problem over ``z = (x, lam)``; ``surrogates[0]`` is the objective."""

    surrogates: list
    lower: np.ndarray
    upper: np.ndarray
    anchor: np.ndarray

    @property
    def objective(self):
        return self.surrogates[0]

    @property
    def constraints(self):
        return self.surrogates[1:]


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    rho: float
    gamma: float
    objective: float
    max_constraint: float
    mode: str
    millis: float

    COLUMNS = ("iter", "rho", "gamma", "objective", "max_constraint", "mode", "millis")


@dataclass
class RunResult:
    iterate: LongTermIterate
    tracker: SurrogateTracker
    trace: list
    report: Optional[KktReport]
    saa_f: np.ndarray
    slater_margin: float
    lambda_at_cap: bool
    infeasible_trajectory: bool
    stop_reason: str


@dataclass
class BatchEvaluation:
    """Per-sample values and gradient pieces, stacked over the batch."""

    values: np.ndarray
    grads_x: np.ndarray
    pushed_x: np.ndarray
    grads_lam: np.ndarray
    results: list


def _sample_pieces(problem, spec, x, lam, xi):
    result, tape = run_short_term(spec, x, lam, xi, record=True)
    m1 = problem.m + 1
    vals = np.zeros(m1)
    gx = np.zeros((m1, problem.n_x))
    px = np.zeros((m1, problem.n_x))
    gl = np.zeros((m1, problem.m))
    for i in range(m1):
        vals[i], gx[i], gy = evaluate_sample(problem, i, x, result.y, xi)
        px[i], gl[i] = vjp(tape, gy)
    return vals, gx, px, gl, result


def evaluate_batch(problem: ProblemDefinition, spec: ShortTermSolverSpec, x, lam, states,
                   pool: Optional[ThreadPoolExecutor] = None) -> BatchEvaluation:
    """Run the short-term solver and reverse sweeps on every state.

    Results are collected in state order, so they do not depend on ``pool``.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if pool is None:
        out = [_sample_pieces(problem, spec, x, lam, xi) for xi in states]
    else:
        out = list(pool.map(lambda xi: _sample_pieces(problem, spec, x, lam, xi), states))
    return BatchEvaluation(
        values=np.array([o[0] for o in out]),
        grads_x=np.array([o[1] for o in out]),
        pushed_x=np.array([o[2] for o in out]),
        grads_lam=np.array([o[3] for o in out]),
        results=[o[4] for o in out],
    )


def solve_objective_update(sub: ConvexSubproblem, gap_tol: float = 1e-8):
    """Minimize the objective surrogate under the constraint surrogates.

    Returns
    -------
    z : ndarray or None
        Minimizer, or None when phase I finds no point with every
        constraint below ``-1e-9``.
    multipliers : ndarray or None
    """
    res, feasible = minimize_convex(sub.objective, sub.constraints, sub.lower, sub.upper,
                                    sub.anchor, gap_tol=gap_tol, margin=PHASE_ONE_MARGIN)
    if not feasible:
        return None, None
    return res.z, res.multipliers


def solve_feasibility_update(sub: ConvexSubproblem, gap_tol: float = 1e-8):
    """Minimize ``alpha`` subject to ``fbar_i(z) <= alpha`` over the box.

    Returns
    -------
    z : ndarray
    alpha : float
    """
    if not sub.constraints:
        raise ProblemError("feasibility update needs at least one constraint")
    res = barrier_minimize(None, sub.constraints, sub.lower, sub.upper, sub.anchor,
                           epigraph=True, gap_tol=gap_tol)
    return res.z, res.alpha


def iteration_rng(seed: int, t: int) -> np.random.Generator:
    """Stream for the batch of iteration ``t``; independent of worker count."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, t)))


def report_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


def _box(problem):
    lo = np.concatenate([problem.domain_x.lower, np.zeros(problem.m)])
    hi = np.concatenate([problem.domain_x.upper, np.full(problem.m, problem.lambda_cap)])
    return lo, hi


def averaged_iterate(anchor, target, gamma: float, lower, upper) -> np.ndarray:
    """``(1 - gamma) * anchor + gamma * target``, clipped into the box against roundoff."""
    z = (1.0 - gamma) * np.asarray(anchor, dtype=float) + gamma * np.asarray(target, dtype=float)
    return np.clip(z, lower, upper)


def outer_step(problem: ProblemDefinition, spec: ShortTermSolverSpec, config: SolverConfig,
               iterate: LongTermIterate, tracker: SurrogateTracker, states,
               pool: Optional[ThreadPoolExecutor] = None):
    """One outer iteration.

    Returns
    -------
    new_iterate : LongTermIterate
    new_tracker : SurrogateTracker
    mode : str
        ``"objective"`` or ``"feasibility"``.
    batch : BatchEvaluation
    """
    rho, gamma = step_values(config.schedule, iterate.t)
    batch = evaluate_batch(problem, spec, iterate.x, iterate.lam, states, pool)
    new_tracker = update_trackers(tracker, rho, batch.values, batch.grads_x, batch.pushed_x,
                                  batch.grads_lam)
    surrogates = build_surrogate(tracker, new_tracker, iterate.x, iterate.lam, rho,
                                 batch=(batch.values, batch.grads_x, None))
    lo, hi = _box(problem)
    anchor = np.concatenate([iterate.x, iterate.lam])
    sub = ConvexSubproblem(surrogates, lo, hi, anchor)
    zbar, _ = solve_objective_update(sub, config.gap_tol)
    mode = "objective"
    if zbar is None:
        zbar, _ = solve_feasibility_update(sub, config.gap_tol)
        mode = "feasibility"
    z = averaged_iterate(anchor, zbar, gamma, lo, hi)
    new = LongTermIterate(z[:problem.n_x], z[problem.n_x:], iterate.t + 1)
    return new, new_tracker, mode, batch


def _final_report(problem, spec, iterate, config, pool):
    states = problem.sample(report_rng(config.seed), config.report_batch)
    batch = evaluate_batch(problem, spec, iterate.x, iterate.lam, states, pool)
    saa = batch.values.mean(axis=0)
    report = kkt_report(problem, iterate, list(zip(batch.results, states)), saa,
                        expect_multipliers=spec.layer.provides_multipliers)
    return report, saa


def run(problem: ProblemDefinition, spec: ShortTermSolverSpec, config: SolverConfig,
        x0, lam0, callback=None, final_report: bool = True) -> RunResult:
    """Run the outer loop from ``(x0, lam0)``.

    Parameters
    ----------
    problem : ProblemDefinition
    spec : ShortTermSolverSpec
    config : SolverConfig
    x0, lam0 : array_like
        Initial point inside the long-term box.
    callback : callable, optional
        Called as ``callback(iterate, tracker, record)`` after every step.
    final_report : bool
        Evaluate a :class:`KktReport` on a fresh batch at the end.
    """
    iterate = LongTermIterate(x0, lam0, 0)
    iterate.check(problem)
    tracker = initial_tracker(problem.n_x, problem.m, config.tau)
    trace = []
    moves = []
    modes = []
    stop_reason = "max_iterations"
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    began = time.perf_counter()
    try:
        for t in range(config.T_max):
            start = time.perf_counter()
            rho, gamma = step_values(config.schedule, t)
            states = problem.sample(iteration_rng(config.seed, t), config.B)
            new, tracker, mode, _ = outer_step(problem, spec, config, iterate, tracker, states, pool)
            move = float(np.linalg.norm(new.x - iterate.x) + np.linalg.norm(new.lam - iterate.lam))
            iterate = new
            millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
            cons = float(tracker.f[1:].max()) if problem.m else float("nan")
            rec = TraceRecord(t, rho, gamma, problem.objective_sign * float(tracker.f[0]), cons, mode, millis)
            trace.append(rec)
            modes.append(mode)
            moves.append(move)
            if callback is not None:
                callback(iterate, tracker, rec)
            if (config.stop_tolerance > 0 and len(moves) >= config.stop_window
                    and max(moves[-config.stop_window:]) <= config.stop_tolerance):
                stop_reason = "stalled"
                break
            if config.time_budget > 0 and time.perf_counter() - began >= config.time_budget:
                stop_reason = "time_budget"
                break
        report, saa = (None, np.full(problem.m + 1, np.nan))
        if final_report:
            report, saa = _final_report(problem, spec, iterate, config, pool)
    finally:
        if pool is not None:
            pool.shutdown()
    at_cap = bool(np.any(iterate.lam >= problem.lambda_cap * (1 - 1e-9))) if problem.m else False
    if at_cap:
        log.warning("a multiplier reached lambda_cap; the constraint may be infeasible")
    infeasible = bool(modes) and all(m == "feasibility" for m in modes)
    margin = float(np.min(-saa[1:])) if problem.m and final_report else float("nan")
    return RunResult(iterate, tracker, trace, report, saa, margin, at_cap, infeasible, stop_reason)
