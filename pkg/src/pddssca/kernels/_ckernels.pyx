# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_reference``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def wmmse_sweep(const double complex[:, ::1] heff, const double complex[:, ::1] fhf,
                const double complex[:, ::1] g, const double[::1] lam):
    cdef Py_ssize_t K = heff.shape[0], S = heff.shape[1]
    cdef Py_ssize_t k, i, s, t, r
    cdef double complex acc, dk
    cdef double den, mag, ck
    u_arr = np.empty(K, dtype=np.complex128)
    w_arr = np.empty(K, dtype=np.float64)
    q_arr = np.empty((S, S), dtype=np.complex128)
    g_arr = np.empty((S, K), dtype=np.complex128)
    cdef double complex[::1] u = u_arr
    cdef double[::1] w = w_arr
    cdef double complex[:, ::1] q = q_arr
    cdef double complex[:, ::1] x = g_arr
    cdef double coef

    for k in range(K):
        den = 1.0
        dk = 0.0
        for i in range(K):
            acc = 0.0
            for s in range(S):
                acc = acc + heff[k, s] * g[s, i]
            mag = acc.real * acc.real + acc.imag * acc.imag
            den += mag
            if i == k:
                dk = acc
        u[k] = dk / den
        w[k] = den / (den - (dk.real * dk.real + dk.imag * dk.imag))

    for s in range(S):
        for t in range(S):
            q[s, t] = fhf[s, t]
    for k in range(K):
        ck = lam[k] * w[k] * (u[k].real * u[k].real + u[k].imag * u[k].imag)
        for s in range(S):
            for t in range(S):
                q[s, t] = q[s, t] + ck * heff[k, s].conjugate() * heff[k, t]
    for s in range(S):
        for k in range(K):
            x[s, k] = lam[k] * w[k] * u[k] * heff[k, s].conjugate()

    # in-place Cholesky, lower factor stored in q
    for s in range(S):
        coef = q[s, s].real
        for r in range(s):
            coef -= q[s, r].real * q[s, r].real + q[s, r].imag * q[s, r].imag
        if coef <= 0.0:
            return _fallback(heff, fhf, g, lam)
        coef = sqrt(coef)
        q[s, s] = coef
        for t in range(s + 1, S):
            acc = q[t, s]
            for r in range(s):
                acc = acc - q[t, r] * q[s, r].conjugate()
            q[t, s] = acc / coef

    for k in range(K):
        for s in range(S):
            acc = x[s, k]
            for r in range(s):
                acc = acc - q[s, r] * x[r, k]
            x[s, k] = acc / q[s, s].real
        for s in range(S - 1, -1, -1):
            acc = x[s, k]
            for r in range(s + 1, S):
                acc = acc - q[r, s].conjugate() * x[r, k]
            x[s, k] = acc / q[s, s].real
    return g_arr, u_arr, w_arr


def _fallback(heff, fhf, g, lam):
    from ._reference import wmmse_sweep as ref
    return ref(np.asarray(heff), np.asarray(fhf), np.asarray(g), np.asarray(lam))


def cmac_power(const double[::1] lam, double upsilon, a_in, b_in, double p_max):
    cdef cnp.ndarray[cnp.double_t, ndim=2] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.double_t, ndim=2] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t T = a.shape[0], N = a.shape[1], n, i
    p_arr = np.zeros((T, N), dtype=np.float64)
    act_arr = np.zeros((T, N), dtype=np.bool_)
    grd_arr = np.zeros((T, N), dtype=np.bool_)
    cdef double[:, ::1] p = p_arr
    cdef cnp.uint8_t[:, ::1] act = act_arr.view(np.uint8)
    cdef cnp.uint8_t[:, ::1] grd = grd_arr.view(np.uint8)
    cdef double c, raw
    for n in range(T):
        for i in range(N):
            c = b[n, i] * upsilon + lam[i]
            if c <= 0.0:
                p[n, i] = p_max
                grd[n, i] = 1
                continue
            if a[n, i] <= 0.0:
                continue
            raw = (a[n, i] / c - 1.0) / (N * a[n, i])
            if raw > p_max:
                p[n, i] = p_max
            elif raw > 0.0:
                p[n, i] = raw
                act[n, i] = 1
    return p_arr, act_arr, grd_arr
