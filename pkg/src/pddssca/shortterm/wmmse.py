"""WMMSE layers for hybrid analog-digital precoding.

Complex matrices cross every public boundary as stacked real vectors
``[Re(G).ravel(); Im(G).ravel()]``. Internally the layer works with numpy
complex arrays; a cotangent ``Gbar`` denotes
``dL/dRe(G) + 1j * dL/dIm(G)``.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from .base import InitRule, ShortTermLayer


def pack(g) -> np.ndarray:
    g = np.asarray(g)
    return np.concatenate([g.real.ravel(), g.imag.ravel()])


def unpack(y, rows: int, cols: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    half = rows * cols
    return (y[:half] + 1j * y[half:]).reshape(rows, cols)


def rf_precoder(theta, M: int, S: int) -> np.ndarray:
    """Unit-modulus analog precoder; column ``s`` uses ``theta[s*M:(s+1)*M]``."""
    return np.exp(1j * np.asarray(theta, dtype=float).reshape(S, M).T)


def rf_precoder_vjp(F, Fbar) -> np.ndarray:
    """Pull a cotangent on ``F`` back to the phases (same ordering)."""
    return np.imag(Fbar * np.conj(F)).T.ravel()


def rates(Heff, G):
    """Per-user rates in nats, with total and interference-plus-noise powers."""
    A = Heff @ G
    tot = np.sum(np.abs(A) ** 2, axis=1) + 1.0
    sig = np.abs(np.diag(A)) ** 2
    intf = tot - sig
    return np.log1p(sig / intf), tot, intf, A


def wmmse_layer(G, F, lam, H):
    """One exact block-coordinate sweep: receivers, then weights, then precoder.

    Parameters
    ----------
    G : ndarray, complex, shape (S, K)
    F : ndarray, complex, shape (M, S)
    lam : ndarray, shape (K,)
    H : ndarray, complex, shape (K, M)

    Returns
    -------
    G_new : ndarray, complex, shape (S, K)
    u : ndarray, complex, shape (K,)
    w : ndarray, shape (K,)
    """
    Heff = np.ascontiguousarray(H @ F)
    FhF = np.ascontiguousarray(F.conj().T @ F)
    return kernels.wmmse_sweep(Heff, FhF, np.ascontiguousarray(G, dtype=complex),
                               np.ascontiguousarray(lam, dtype=float))


def wmmse_objective(G, u, w, F, lam, H) -> float:
    """``||F G||_F^2 + sum_k lam_k (w_k e_k - log w_k)`` with ``e_k`` the MSE."""
    A = H @ F @ G
    d = np.diag(A)
    tot = np.sum(np.abs(A) ** 2, axis=1) + 1.0
    e = np.abs(u) ** 2 * tot - 2.0 * np.real(np.conj(u) * d) + 1.0
    return float(np.linalg.norm(F @ G) ** 2 + np.sum(lam * (w * e - np.log(w))))


def _sweep_vjp(Heff, FhF, G, lam, Gbar):
    """Transposed Jacobian of one sweep w.r.t. ``(G, Heff, FhF, lam)``."""
    K = Heff.shape[0]
    A = Heff @ G
    d = np.diag(A).copy()
    den = np.sum(np.abs(A) ** 2, axis=1) + 1.0
    u = d / den
    sig = np.abs(d) ** 2
    w = den / (den - sig)
    c = lam * w * np.abs(u) ** 2
    Q = (Heff.conj().T * c) @ Heff + FhF
    beta = lam * w * u
    R = Heff.conj().T * beta
    Gn = np.linalg.solve(Q, R)

    # G_new = Q^{-1} R
    Rbar = np.linalg.solve(Q.conj().T, Gbar)
    Qbar = -Rbar @ Gn.conj().T
    # R[:, k] = beta_k conj(Heff[k, :])
    betabar = np.sum(Heff.T * Rbar, axis=0)
    Heff_bar = (np.conj(beta)[None, :] * Rbar).T.conj()
    # Q = Heff^H diag(c) Heff + FhF
    FhF_bar = Qbar
    Heff_bar = Heff_bar + (Heff @ (Qbar + Qbar.conj().T)) * c[:, None]
    cbar = np.einsum("ks,st,kt->k", np.conj(Heff), np.conj(Qbar), Heff).real
    # beta = lam w u,  c = lam w |u|^2
    lam_bar = np.real(np.conj(betabar) * w * u) + cbar * w * np.abs(u) ** 2
    wbar = np.real(np.conj(betabar) * lam * u) + cbar * lam * np.abs(u) ** 2
    ubar = betabar * lam * w + 2.0 * cbar * lam * w * u
    # w = den / (den - |d|^2)
    denom = (den - sig) ** 2
    den_bar = wbar * (-sig) / denom
    sig_bar = wbar * den / denom
    # u = d / den
    dbar = ubar / den + 2.0 * sig_bar * d
    den_bar = den_bar + np.real(np.conj(ubar) * (-d / den**2))
    # den = sum |A|^2 + 1, d = diag(A)
    Abar = 2.0 * den_bar[:, None] * A
    Abar[np.arange(K), np.arange(K)] += dbar
    # A = Heff G
    G_bar = Heff.conj().T @ Abar
    Heff_bar = Heff_bar + Abar @ G.conj().T
    return G_bar, Heff_bar, FhF_bar, lam_bar


class WmmseLayer(ShortTermLayer):
    """Unrolled WMMSE sweep for the hybrid precoding example.

    Dimensions: ``x`` holds the ``M*S`` analog phases, ``y`` the stacked
    digital precoder ``G`` of shape ``(S, K)``, ``lam`` the ``K`` rate
    prices, and the state ``xi`` is the channel ``H`` of shape ``(K, M)``.
    """

    kind = "wmmse"

    def __init__(self, problem, M: int, S: int, K: int):
        super().__init__(problem)
        self.M, self.S, self.K = M, S, K

    def _setup(self, x, H):
        F = rf_precoder(x, self.M, self.S)
        Heff = np.ascontiguousarray(H @ F)
        FhF = np.ascontiguousarray(F.conj().T @ F)
        return F, Heff, FhF

    def forward(self, j, y_prev, x, lam, xi):
        F, Heff, FhF = self._setup(x, xi)
        G = unpack(y_prev, self.S, self.K)
        Gn, u, w = kernels.wmmse_sweep(Heff, FhF, np.ascontiguousarray(G),
                                       np.ascontiguousarray(lam, dtype=float))
        return pack(Gn), (u, w)

    def backward(self, j, y_prev, x, lam, xi, cache, ybar):
        F, Heff, FhF = self._setup(x, xi)
        G = unpack(y_prev, self.S, self.K)
        Gbar = unpack(ybar, self.S, self.K)
        G_bar, Heff_bar, FhF_bar, lam_bar = _sweep_vjp(Heff, FhF, G, lam, Gbar)
        # Heff = H F, FhF = F^H F
        F_bar = xi.conj().T @ Heff_bar + F @ (FhF_bar + FhF_bar.conj().T)
        return pack(G_bar), rf_precoder_vjp(F, F_bar), lam_bar


class MatchedFilterInit(InitRule):
    """``g_k`` proportional to ``Heff[k, :]^H`` with ``||F g_k|| = 1``."""

    def __init__(self, M: int, S: int, K: int):
        self.M, self.S, self.K = M, S, K

    def _parts(self, x, H):
        F = rf_precoder(x, self.M, self.S)
        Heff = H @ F
        V = Heff.conj().T
        norms = np.linalg.norm(F @ V, axis=0)
        return F, Heff, V, norms

    def __call__(self, x, lam, xi):
        F, Heff, V, norms = self._parts(x, xi)
        return pack(V / norms)

    def vjp(self, x, lam, xi, ybar):
        F, Heff, V, norms = self._parts(x, xi)
        Gbar = unpack(ybar, self.S, self.K)
        P = F @ V
        # G = V / ||F V||; chain through V = Heff^H and P = F V
        nbar = -np.real(np.sum(np.conj(Gbar) * V, axis=0)) / norms**2
        Pbar = nbar[None, :] * P / norms[None, :]
        Vbar = Gbar / norms + F.conj().T @ Pbar
        F_bar = Pbar @ V.conj().T
        Heff_bar = Vbar.conj().T
        F_bar = F_bar + xi.conj().T @ Heff_bar
        return rf_precoder_vjp(F, F_bar), np.zeros(np.size(lam))
