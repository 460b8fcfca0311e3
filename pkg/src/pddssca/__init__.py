"""Two-timescale stochastic optimization with deep-unrolled short-term solvers.

Long-term variables are updated by a stochastic successive convex
approximation loop; short-term variables come from a fixed number of
unrolled solver iterations whose gradients are obtained by reverse sweeps.
"""
from .core import (Box, ConvergenceError, KktReport, LongTermIterate, ProblemDefinition,
                   ProblemError, StepSchedule, evaluate_sample, kkt_report, step_values)
from .longterm import RunResult, SolverConfig, run
from .shortterm import ShortTermResult, ShortTermSolverSpec, run_short_term
from .unroll import UnrollTape, fd_oracle, grad_through, vjp

__version__ = "0.1.0"

__all__ = [
    "Box", "ConvergenceError", "KktReport", "LongTermIterate", "ProblemDefinition",
    "ProblemError", "StepSchedule", "evaluate_sample", "kkt_report", "step_values",
    "RunResult", "SolverConfig", "run", "ShortTermResult", "ShortTermSolverSpec",
    "run_short_term", "UnrollTape", "fd_oracle", "grad_through", "vjp", "__version__",
]
