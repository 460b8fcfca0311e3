"""Pure numpy implementations of the hot kernels.

These are the fallback used when the compiled module is unavailable and the
reference the compiled kernels are tested against.
"""
import numpy as np


def wmmse_sweep(heff, fhf, g, lam):
    """One receiver, weight, precoder block sweep of the WMMSE iteration.

    Parameters
    ----------
    heff : ndarray, complex, shape (K, S)
        Effective channel, row k is the channel seen by user k.
    fhf : ndarray, complex, shape (S, S)
        Gram matrix of the analog precoder.
    g : ndarray, complex, shape (S, K)
        Current digital precoder.
    lam : ndarray, shape (K,)
        Nonnegative rate weights.

    Returns
    -------
    g_new : ndarray, complex, shape (S, K)
    u : ndarray, complex, shape (K,)
        MMSE receivers.
    w : ndarray, shape (K,)
        MSE weights.
    """
    a = heff @ g
    d = np.diag(a).copy()
    den = np.sum(a.real**2 + a.imag**2, axis=1) + 1.0
    u = d / den
    w = den / (den - (d.real**2 + d.imag**2))
    c = lam * w * (u.real**2 + u.imag**2)
    q = (heff.conj().T * c) @ heff + fhf
    r = heff.conj().T * (lam * w * u)
    g_new = np.linalg.solve(q, r)
    return g_new, u, w


def cmac_power(lam, upsilon, a, b, p_max):
    """Batch closed-form powers for the multiple-access example.

    Parameters
    ----------
    lam : ndarray, shape (N,)
        Per-user power prices.
    upsilon : float
        Interference price.
    a, b : ndarray, shape (T, N)
        Channel gains to the receiver and to the protected primary user.
    p_max : float
        Cap applied when the denominator degenerates.

    Returns
    -------
    p : ndarray, shape (T, N)
    active : ndarray of bool, shape (T, N)
        Mask of strictly positive entries (the branch that carries gradient).
    guarded : ndarray of bool, shape (T, N)
        Entries whose denominator was nonpositive and were capped.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[-1]
    c = b * upsilon + lam
    guarded = c <= 0.0
    safe = np.where(guarded, 1.0, c)
    pos = a > 0.0
    a_safe = np.where(pos, a, 1.0)
    raw = (a_safe / safe - 1.0) / (n * a_safe)
    active = (raw > 0.0) & ~guarded & pos
    p = np.where(active, raw, 0.0)
    over = p > p_max
    p = np.where(guarded | over, p_max, p)
    active &= ~over
    return p, active, guarded
