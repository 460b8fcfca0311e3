"""Deep unrolling: reverse-mode differentiation through the short-term layers.

The forward pass stores every layer output on an :class:`UnrollTape`; the
reverse sweep walks the tape from the last layer to the first, applying each
layer's hand-derived transposed Jacobian. One tape serves any number of
sweeps, one per constraint function.

At points where a projection or clipping switches branch the sweep uses the
active set recorded on the forward pass, and the derivative of ``max(., 0)``
at zero is taken to be zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import evaluate_sample

__all__ = ["UnrollTape", "vjp", "grad_through", "fd_oracle", "replay", "relative_error"]


@dataclass
class UnrollTape:
    """Forward record of one unrolled solve.

    ``layer_states`` holds ``y_0 .. y_J``; ``cached`` the per-layer
    intermediates the backward maps need.
    """

    spec: Any
    x: np.ndarray
    lam: np.ndarray
    xi: Any
    layer_states: list
    layer_kind: list
    cached: list

    @property
    def J(self) -> int:
        return len(self.cached)


def vjp(tape: UnrollTape, cotangent):
    """Pull ``cotangent`` on ``y_J`` back to ``(x, lam)``.

    Returns
    -------
    x_bar : ndarray, shape (n_x,)
    lam_bar : ndarray, shape (m,)
    """
    layer = tape.spec.layer
    ybar = np.asarray(cotangent, dtype=float).copy()
    xbar = np.zeros(tape.x.size)
    lbar = np.zeros(tape.lam.size)
    for j in range(tape.J, 0, -1):
        ybar, xb, lb = layer.backward(j, tape.layer_states[j - 1], tape.x, tape.lam, tape.xi,
                                      tape.cached[j - 1], ybar)
        xbar += xb
        lbar += lb
    xb, lb = tape.spec.init_rule.vjp(tape.x, tape.lam, tape.xi, ybar)
    return xbar + xb, lbar + lb


def grad_through(problem, i: int, x, lam, xi, result, tape: UnrollTape):
    """Total gradient of ``g_i(x, y_J(x, lam, xi), xi)``.

    Returns
    -------
    total_grad_x : ndarray
        Partial gradient in ``x`` plus the part pushed through ``y_J``.
    total_grad_lambda : ndarray
    value : float
    """
    value, gx, gy = evaluate_sample(problem, i, x, result.y, xi)
    bx, bl = vjp(tape, gy)
    return gx + bx, bl, value


def replay(tape: UnrollTape):
    """Recompute the layer outputs from ``y_0`` using the recorded inputs."""
    layer = tape.spec.layer
    y = tape.layer_states[0]
    out = [y]
    for j in range(1, tape.J + 1):
        y, _ = layer.forward(j, y, tape.x, tape.lam, tape.xi)
        out.append(y)
    return out


def _unrolled_value(spec, problem, i, x, lam, xi):
    from .shortterm.base import run_short_term

    y = run_short_term(spec, x, lam, xi).y
    return evaluate_sample(problem, i, x, y, xi)[0]


def fd_oracle(problem, i: int, x, lam, xi, spec, step: float = 1e-6):
    """Central finite differences of ``g_i(x, y_J(x, lam, xi), xi)``.

    The step for coordinate ``z`` is ``step * (1 + |z|)``.

    Returns
    -------
    grad_x, grad_lambda : ndarray
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)

    def diff(vec, fn):
        out = np.zeros(vec.size)
        for k in range(vec.size):
            h = step * (1.0 + abs(vec[k]))
            up = vec.copy()
            dn = vec.copy()
            up[k] += h
            dn[k] -= h
            out[k] = (fn(up) - fn(dn)) / (2 * h)
        return out

    gx = diff(x, lambda v: _unrolled_value(spec, problem, i, v, lam, xi))
    gl = diff(lam, lambda v: _unrolled_value(spec, problem, i, x, v, xi))
    return gx, gl


def relative_error(a, b, floor: float = 1e-8) -> float:
    """Max over coordinates of ``|a - b| / |b|`` (absolute when ``|b| < floor``)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.size == 0:
        return 0.0
    diff = np.abs(a - b)
    scale = np.abs(b)
    err = np.where(scale >= floor, diff / np.where(scale >= floor, scale, 1.0), diff)
    return float(err.max())
