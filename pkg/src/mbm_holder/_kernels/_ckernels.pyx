# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: in-place mBm Gram fill and dyadic coefficient transform."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tgamma, sin, exp, log, fabs, M_PI

cnp.import_array()


cdef inline double _c0(double alpha) nogil:
    return 2.0 * M_PI / (tgamma(alpha + 1.0) * sin(M_PI * alpha / 2.0))


def fill_gram_lower(double[::1] t, double[::1] h, double[::1] theta, double[:, ::1] out,
                    double jitter=0.0):
    """Write theta_i theta_j Cov(B(t_i), B(t_j)) into the lower triangle of ``out``.

    Powers are taken as ``exp(a log x)`` with the logs of ``t`` precomputed; on a
    uniform grid ``t_i = (i + 1) dt`` the logs of the lags are tabulated too.
    """
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i, j
    cdef double a, hi, thi, lti, d, p
    cdef bint uniform = 1
    if out.shape[0] != n or out.shape[1] != n:
        raise ValueError("out must be square with side len(t)")
    lt_arr = np.empty(n)
    ld_arr = np.empty(n)
    cdef double[::1] lt = lt_arr
    cdef double[::1] ld = ld_arr
    with nogil:
        for i in range(n):
            lt[i] = log(fabs(t[i]))
            if fabs(t[i] - (i + 1) * t[0]) > 1e-13 * fabs(t[i]):
                uniform = 0
        if uniform:
            ld[0] = 0.0
            for i in range(1, n):
                ld[i] = log(i * fabs(t[0]))
        for i in range(n):
            hi = h[i]
            thi = theta[i]
            lti = lt[i]
            for j in range(i + 1):
                a = hi + h[j]
                if i == j:
                    p = 2.0 * exp(a * lti)
                else:
                    if uniform:
                        d = exp(a * ld[i - j])
                    else:
                        d = exp(a * log(fabs(t[i] - t[j])))
                    p = exp(a * lti) + exp(a * lt[j]) - d
                out[i, j] = thi * theta[j] * 0.5 * _c0(a) * p
            out[i, i] += jitter
    return np.asarray(out)


def block_coefficients(double[::1] dy, double[::1] w, Py_ssize_t nblocks, double scale):
    """Return scale * sum_l dy[k*m + l] * w[l] for each block k (m = len(dy) // nblocks)."""
    cdef Py_ssize_t m = dy.shape[0] // nblocks
    cdef Py_ssize_t nw = w.shape[0]
    cdef Py_ssize_t k, l, base
    cdef double acc
    if nw > m:
        raise ValueError("weight vector longer than block")
    res = np.empty(nblocks, dtype=np.float64)
    cdef double[::1] r = res
    with nogil:
        for k in range(nblocks):
            base = k * m
            acc = 0.0
            for l in range(nw):
                acc = acc + dy[base + l] * w[l]
            r[k] = scale * acc
    return res
