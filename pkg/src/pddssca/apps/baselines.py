"""Reference methods for the multiple-access example.

* :func:`dual_ellipsoid_baseline` prices the long-term constraints with a
  central-cut ellipsoid method on the dual of the separable problem. For
  fixed prices the powers are the closed-form minimizers, so the vector of
  sample-average constraint values is the exact gradient of the (convex)
  negated dual function.
* :func:`short_term_constraint_baseline` enforces the budgets on every
  state instead of on average and solves each state with the log-barrier
  interior-point method.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ..convex import QuadModel, barrier_minimize
from ..shortterm.cmac import cmac_short_term
from .cmac import CmacInstance, capacity


@dataclass
class EllipsoidResult:
    lam: np.ndarray
    upsilon: float
    capacity: float
    max_violation: float
    iterations: int
    volume: float


def _dual_terms(inst, mu, a, b):
    N = inst.N
    p = cmac_short_term(mu[:N], mu[N], a, b, inst.p_max)
    cons = np.append(p.mean(axis=0) - inst.power, np.mean(np.sum(b * p, axis=1)) - inst.gamma)
    c = b * mu[N] + mu[:N]
    lag = -np.log1p(N * a * p).sum(axis=1) / N + np.sum(c * p, axis=1)
    dual = float(lag.mean() - mu[:N] @ inst.power - mu[N] * inst.gamma)
    return p, cons, dual


def dual_ellipsoid_baseline(inst: CmacInstance, states, center=None, radius: float = 10.0,
                            volume_tol: float = 1e-10, max_iter: int = 20000) -> EllipsoidResult:
    """Ellipsoid method on the prices ``(lam, upsilon)``.

    Parameters
    ----------
    inst : CmacInstance
    states : ndarray, shape (T, 2, N)
        The sample set defining the expectations.
    center : array_like, optional
        Initial ellipsoid center; defaults to all ones.
    radius : float
        Radius of the initial ball.
    volume_tol : float
        Stop once the ellipsoid volume falls below this value.

    Returns
    -------
    EllipsoidResult
        The best dual point visited, its average capacity and the largest
        constraint violation of its powers.
    """
    states = np.asarray(states, dtype=float)
    a, b = states[:, 0, :], states[:, 1, :]
    n = inst.N + 1
    c = np.ones(n) if center is None else np.asarray(center, dtype=float).copy()
    P = np.eye(n) * radius**2
    log_unit = 0.5 * n * np.log(np.pi) - gammaln(0.5 * n + 1)
    best = None
    it = 0
    vol = np.inf
    for it in range(1, max_iter + 1):
        if np.any(c < 0):
            k = int(np.argmin(c))
            g = np.zeros(n)
            g[k] = -1.0
        else:
            _, cons, dual = _dual_terms(inst, c, a, b)
            if best is None or dual > best[0]:
                best = (dual, c.copy())
            # maximize the dual: keep {mu : cons.(mu - c) >= 0}
            g = -cons
            if not np.any(g):
                break
        Pg = P @ g
        gPg = float(g @ Pg)
        if gPg <= 0:
            break
        gt = Pg / np.sqrt(gPg)
        c = c - gt / (n + 1)
        P = (n * n / (n * n - 1.0)) * (P - (2.0 / (n + 1)) * np.outer(gt, gt))
        P = 0.5 * (P + P.T)
        sign, logdet = np.linalg.slogdet(P)
        vol = float(np.exp(log_unit + 0.5 * logdet)) if sign > 0 else 0.0
        if vol < volume_tol:
            break
    mu = best[1]
    p, cons, _ = _dual_terms(inst, mu, a, b)
    return EllipsoidResult(lam=mu[:inst.N], upsilon=float(mu[inst.N]),
                           capacity=float(capacity(a, p).mean()),
                           max_violation=float(max(0.0, cons.max())), iterations=it, volume=vol)


class _NegLogCapacity:
    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    def value(self, p):
        return -np.log1p(self.a @ p)

    def grad(self, p):
        return -self.a / (1.0 + self.a @ p)

    def hess(self, p):
        s = 1.0 + self.a @ p
        return np.outer(self.a, self.a) / s**2


def per_state_power(a, b, power, gamma: float, gap_tol: float = 1e-10) -> np.ndarray:
    """Maximize ``log(1 + a.p)`` over ``0 <= p <= power``, ``b.p <= gamma``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    power = np.asarray(power, dtype=float)
    if gamma <= 0 and np.all(b > 0):
        return np.zeros_like(a)
    cons = [] if not np.any(b) else [QuadModel(-gamma, b, 0.0, np.zeros_like(a))]
    start = np.full_like(a, 1e-3) * np.minimum(power, 1.0)
    if cons and b @ start >= gamma:
        start *= 0.5 * gamma / (b @ start)
    res = barrier_minimize(_NegLogCapacity(a), cons, np.zeros_like(a), power, start, gap_tol=gap_tol)
    return res.z


def short_term_constraint_baseline(inst: CmacInstance, states) -> tuple[float, np.ndarray]:
    """Average capacity when every state meets the budgets on its own.

    Returns
    -------
    capacity : float
    powers : ndarray, shape (T, N)
    """
    states = np.asarray(states, dtype=float)
    powers = np.array([per_state_power(s[0], s[1], inst.power, inst.gamma) for s in states])
    return float(capacity(states[:, 0, :], powers).mean()), powers
