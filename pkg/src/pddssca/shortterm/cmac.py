"""Closed-form power allocation for the cognitive multiple-access example."""
from __future__ import annotations

import logging

import numpy as np

from .. import kernels
from .base import ConstantInit, ShortTermLayer

log = logging.getLogger(__name__)

DEFAULT_P_MAX = 1e6


def cmac_short_term(lam, upsilon: float, a, b, p_max: float = DEFAULT_P_MAX, return_flags: bool = False):
    """Per-user powers ``p_i = (1 / (N a_i)) (a_i / (b_i upsilon + lam_i) - 1)^+``.

    This is the exact minimizer of the separable problem

        -(1/N) sum_i log(1 + N a_i p_i) + sum_i (b_i upsilon + lam_i) p_i,

    a lower bound of the sum-capacity Lagrangian obtained from concavity of
    the logarithm.

    Parameters
    ----------
    lam : array_like, shape (N,)
    upsilon : float
    a, b : array_like, shape (N,) or (T, N)
    p_max : float
        Cap used when ``b_i upsilon + lam_i <= 0``; such entries are flagged.
    return_flags : bool
        Also return the mask of guarded entries.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    single = a.ndim == 1
    a2 = np.atleast_2d(a)
    b2 = np.atleast_2d(b)
    lam = np.ascontiguousarray(lam, dtype=float)
    p, _, guarded = kernels.cmac_power(lam, float(upsilon), a2, b2, float(p_max))
    if np.any(guarded):
        log.warning("nonpositive price denominator in %d entries; power capped", int(guarded.sum()))
    if single:
        p, guarded = p[0], guarded[0]
    return (p, guarded) if return_flags else p


class CmacClosedForm(ShortTermLayer):
    """Single closed-form layer; the state is ``xi = [a; b]`` of shape ``(2, N)``.

    ``lam`` holds the per-user prices followed by the interference price.
    """

    kind = "cmac_closed_form"

    def __init__(self, problem, p_max: float = DEFAULT_P_MAX):
        super().__init__(problem)
        self.p_max = min(float(p_max), float(problem.domain_y.upper.max()))

    def forward(self, j, y_prev, x, lam, xi):
        n = self.problem.n_y
        lam_u = np.ascontiguousarray(lam[:n])
        p, active, _ = kernels.cmac_power(lam_u, float(lam[n]), xi[0:1], xi[1:2], self.p_max)
        return p[0], (active[0],)

    def backward(self, j, y_prev, x, lam, xi, cache, ybar):
        n = self.problem.n_y
        active = cache[0]
        c = xi[1] * lam[n] + lam[:n]
        dp = np.where(active, -1.0 / (n * np.where(active, c, 1.0) ** 2), 0.0) * ybar
        lbar = np.append(dp, dp @ xi[1])
        return np.zeros(n), np.zeros(np.size(x)), lbar


def cmac_init(n: int) -> ConstantInit:
    return ConstantInit(np.zeros(n))
