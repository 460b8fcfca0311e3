"""Solver specification, result type, and the forward driver."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..core import ProblemError, short_term_residuals


class ShortTermLayer:
    """One unrolled iteration ``y_j = A_j(y_{j-1}; x, lam, xi)``.

    Subclasses implement :meth:`forward` and :meth:`backward`; the backward
    pass returns transposed Jacobian products with respect to the previous
    layer output, ``x`` and ``lam``.
    """

    kind = "layer"
    provides_multipliers = False

    def __init__(self, problem):
        self.problem = problem

    def forward(self, j: int, y_prev, x, lam, xi):
        raise NotImplementedError

    def backward(self, j: int, y_prev, x, lam, xi, cache, ybar):
        raise NotImplementedError

    def multipliers(self, cache) -> Optional[np.ndarray]:
        return None


class InitRule:
    """Initial point ``y_0(x, lam, xi)`` and its pullback."""

    def __call__(self, x, lam, xi):
        raise NotImplementedError

    def vjp(self, x, lam, xi, ybar):
        return np.zeros(np.size(x)), np.zeros(np.size(lam))


class ConstantInit(InitRule):
    """Start from a fixed point independent of ``(x, lam, xi)``."""

    def __init__(self, y0):
        self.y0 = np.asarray(y0, dtype=float)

    def __call__(self, x, lam, xi):
        return self.y0.copy()


class CenterInit(ConstantInit):
    """Start from the center of the short-term box."""

    def __init__(self, problem):
        super().__init__(problem.domain_y.center())


@dataclass
class ShortTermSolverSpec:
    """An unrolled short-term solver.

    Parameters
    ----------
    J : int
        Number of layers; zero returns the initial point.
    layer : ShortTermLayer
        The per-iteration map, bound to its problem.
    init_rule : InitRule
        Rule producing ``y_0``.
    layer_params : dict
        Free-form parameters recorded for provenance.
    """

    J: int
    layer: ShortTermLayer
    init_rule: InitRule
    layer_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.J) < 0:
            raise ProblemError("J must be nonnegative")
        self.J = int(self.J)

    @property
    def problem(self):
        return self.layer.problem


@dataclass
class ShortTermResult:
    """Output of the unrolled short-term solver at one state.

    ``kkt_errors`` holds the stationarity, feasibility and slackness
    residuals of the final layer output.
    """

    y: np.ndarray
    nu: Optional[np.ndarray]
    kkt_errors: tuple


def run_short_term(spec: ShortTermSolverSpec, x, lam, xi, record: bool = False):
    """Run ``J`` layers from the initial point.

    Parameters
    ----------
    spec : ShortTermSolverSpec
    x, lam : ndarray
    xi : state
    record : bool
        Also return the :class:`~pddssca.unroll.UnrollTape` of the pass.

    Returns
    -------
    ShortTermResult, or ``(ShortTermResult, UnrollTape)`` when ``record``.
    """
    from ..unroll import UnrollTape

    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    layer = spec.layer
    y = np.asarray(spec.init_rule(x, lam, xi), dtype=float)
    states = [y]
    caches = []
    for j in range(1, spec.J + 1):
        y, cache = layer.forward(j, y, x, lam, xi)
        states.append(y)
        caches.append(cache)
    nu = layer.multipliers(caches[-1]) if caches else None
    errors = short_term_residuals(layer.problem, x, lam, y, xi, nu)
    result = ShortTermResult(y=y, nu=nu, kkt_errors=errors)
    if not record:
        return result
    tape = UnrollTape(spec=spec, x=x.copy(), lam=lam.copy(), xi=xi,
                      layer_states=states, layer_kind=[layer.kind] * spec.J, cached=caches)
    return result, tape
