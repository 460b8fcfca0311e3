"""Recursive trackers and the convex surrogate functions built from them.

Each constraint function ``f_i(x, lam) = E[g_i(x, y_J(x, lam, xi), xi)]`` is
tracked by exponential averages of its value and of three gradient pieces:
the direct partial in ``x``, the part of the ``x`` gradient that flows
through the short-term solution, and the ``lam`` gradient. The surrogate at
``(x_t, lam_t)`` combines these with a proximal term; optional convex
pieces of ``g_i`` in ``x`` can be kept exactly instead of linearized.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ProblemError

__all__ = ["SurrogateTracker", "SurrogateModel", "update_trackers", "build_surrogate", "initial_tracker"]


@dataclass(frozen=True)
class SurrogateTracker:
    """Tracked quantities for ``i = 0..m`` (row ``i`` per function).

    Attributes
    ----------
    f : ndarray, shape (m + 1,)
    fx : ndarray, shape (m + 1, n_x)
        Tracked direct partial gradients in ``x``.
    fy : ndarray, shape (m + 1, n_x)
        Tracked ``x`` gradients pushed through the short-term solution.
    flam : ndarray, shape (m + 1, m)
    tau : ndarray, shape (m + 1,)
        Proximal weights, strictly positive.
    """

    f: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    flam: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.tau) <= 0):
            raise ProblemError("proximal weights must be positive")


def initial_tracker(n_x: int, m: int, tau=1.0) -> SurrogateTracker:
    """All-zero trackers with proximal weights ``tau``."""
    return SurrogateTracker(
        f=np.zeros(m + 1), fx=np.zeros((m + 1, n_x)), fy=np.zeros((m + 1, n_x)),
        flam=np.zeros((m + 1, m)), tau=np.broadcast_to(np.asarray(tau, dtype=float), (m + 1,)).copy(),
    )


def update_trackers(tracker: SurrogateTracker, rho: float, values, grads_x, pushed_x, grads_lam) -> SurrogateTracker:
    """One tracking step ``f <- (1 - rho) f + rho * batch mean``.

    Parameters
    ----------
    tracker : SurrogateTracker
    rho : float
        Step in ``(0, 1]``.
    values : array_like, shape (B, m + 1)
        ``g_i`` at the batch samples.
    grads_x : array_like, shape (B, m + 1, n_x)
        Direct partial gradients in ``x``.
    pushed_x : array_like, shape (B, m + 1, n_x)
        ``x`` gradients through the short-term solution.
    grads_lam : array_like, shape (B, m + 1, m)
    """
    if not 0.0 < rho <= 1.0:
        raise ProblemError("rho must lie in (0, 1]")
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ProblemError("batch must be nonempty")
    return SurrogateTracker(
        f=(1 - rho) * tracker.f + rho * values.mean(axis=0),
        fx=(1 - rho) * tracker.fx + rho * np.mean(grads_x, axis=0),
        fy=(1 - rho) * tracker.fy + rho * np.mean(pushed_x, axis=0),
        flam=(1 - rho) * tracker.flam + rho * np.mean(grads_lam, axis=0),
        tau=tracker.tau,
    )


class SurrogateModel:
    """Convex surrogate over the stacked long-term variable ``z = (x, lam)``.

    ``value(z) = const + lin.(z - anchor) + tau * ||z - anchor||^2
                 + sum_k weight_k * term_k(x)``

    where each optional term is a convex function of ``x`` exposing
    ``value``, ``grad`` and ``hess``. ``tau`` may be a scalar or a
    per-coordinate vector.
    """

    def __init__(self, const, lin, tau, anchor, n_x: int, convex_terms: Sequence = ()):
        self.const = float(const)
        self.lin = np.asarray(lin, dtype=float)
        self.anchor = np.asarray(anchor, dtype=float)
        self.tau = np.asarray(tau, dtype=float) if np.ndim(tau) else float(tau)
        self.n_x = n_x
        self.convex_terms = list(convex_terms)
        if np.any(np.asarray(self.tau) < 0):
            raise ProblemError("surrogate curvature must be nonnegative")

    def value(self, z):
        d = z - self.anchor
        v = self.const + self.lin @ d + float(np.sum(self.tau * d * d))
        for w, term in self.convex_terms:
            v += w * term.value(z[:self.n_x])
        return v

    def grad(self, z):
        g = self.lin + 2.0 * self.tau * (z - self.anchor)
        for w, term in self.convex_terms:
            g[:self.n_x] += w * np.asarray(term.grad(z[:self.n_x]))
        return g

    def hess(self, z):
        H = np.diag(np.broadcast_to(2.0 * self.tau, z.shape).astype(float))
        for w, term in self.convex_terms:
            H[:self.n_x, :self.n_x] += w * np.asarray(term.hess(z[:self.n_x]))
        return H


def build_surrogate(prev: SurrogateTracker, current: SurrogateTracker, anchor_x, anchor_lam,
                    rho: float, batch=None) -> list:
    """Surrogates ``fbar_i`` for ``i = 0..m`` at the anchor ``(x_t, lam_t)``.

    The value is assembled from the previous trackers, the current batch
    and the current pushed and ``lam`` trackers:

        (1 - rho) f_prev + rho * mean_b [g^c(x) + g^n(x_t) + d_x g^n(x_t).(x - x_t)]
          + ((1 - rho) fx_prev + fy).(x - x_t) + flam.(lam - lam_t)
          + tau * (||x - x_t||^2 + ||lam - lam_t||^2)

    where ``g = g^c + g^n`` splits each sample into a part convex in ``x``
    and the rest. Without a split every sample is linearized; without a
    batch the bracket is recovered from the tracker update, which gives
    ``f + (fx + fy).(x - x_t) + flam.(lam - lam_t) + tau * ||.||^2``.

    Parameters
    ----------
    prev, current : SurrogateTracker
        Trackers before and after this iteration's update.
    anchor_x, anchor_lam : ndarray
    rho : float
    batch : tuple, optional
        ``(values, grads_x, terms)`` with ``values`` of shape ``(B, m + 1)``,
        ``grads_x`` of shape ``(B, m + 1, n_x)`` (full partials of ``g_i``)
        and ``terms`` either None or, per sample, a list of ``m + 1`` convex
        pieces ``g_i^c`` (or None) exposing ``value``, ``grad``, ``hess``.
    """
    anchor_x = np.asarray(anchor_x, dtype=float)
    anchor_lam = np.asarray(anchor_lam, dtype=float)
    n_x = anchor_x.size
    anchor = np.concatenate([anchor_x, anchor_lam])
    m1 = current.f.size
    models = []
    for i in range(m1):
        if batch is None:
            const = current.f[i]
            lin_x = current.fx[i] + current.fy[i]
            terms = []
        else:
            values, grads_x, cterms = batch
            B = len(values)
            const = (1 - rho) * prev.f[i]
            lin_x = (1 - rho) * prev.fx[i] + current.fy[i]
            terms = []
            for b in range(B):
                term = None if cterms is None or cterms[b] is None else cterms[b][i]
                if term is None:
                    gc_val, gc_grad = 0.0, 0.0
                else:
                    gc_val, gc_grad = term.value(anchor_x), np.asarray(term.grad(anchor_x))
                    terms.append((rho / B, term))
                const += rho / B * (values[b][i] - gc_val)
                lin_x = lin_x + rho / B * (np.asarray(grads_x[b][i]) - gc_grad)
        lin = np.concatenate([lin_x, current.flam[i]])
        models.append(SurrogateModel(const, lin, current.tau[i], anchor, n_x, terms))
    return models
