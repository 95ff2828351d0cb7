# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly of the transition matrix and decay operator.

Mirrors ``_kernels._assemble_numpy`` but evaluates each pair weight on the
fly, so no D^4 temporaries are allocated.
"""
import numpy as np

from libc.math cimport exp, sqrt
from scipy.special.cython_special cimport erfcx, ndtr

cdef double SQRT2 = 1.4142135623730951


cdef inline double _weight(double n1, double n2, double beta, double sigma, int kind) noexcept nogil:
    cdef double nb = 0.5 * (n1 + n2)
    cdef double d = n1 - n2
    cdef double s2 = sigma * sigma
    cdef double pre = exp(-d * d / (8.0 * s2))
    cdef double v, y, u, tail
    if kind == 1:
        v = 2.0 / (beta * beta)
        return pre * sqrt((v - s2) / v) * exp(-(nb + 1.0 / beta) * (nb + 1.0 / beta) / (2.0 * v))
    y = -beta * s2 / 2.0 - nb
    u = (y + beta * s2) / sigma
    if u >= 0:
        tail = exp(-y * y / (2.0 * s2)) * 0.5 * erfcx(u / SQRT2)
    else:
        tail = exp(beta * y + beta * beta * s2 / 2.0) * ndtr(-u)
    return pre * (ndtr(y / sigma) + tail)


def assemble(double[::1] E, double complex[:, :, ::1] A, double beta, double sigma, int kind):
    cdef Py_ssize_t D = E.shape[0]
    cdef Py_ssize_t nA = A.shape[0]
    cdef Py_ssize_t a, i, j, k, l, m
    cdef double complex s
    cdef double w

    M_arr = np.zeros((D * D, D * D), dtype=complex)
    N_arr = np.zeros((D, D), dtype=complex)
    cdef double complex[:, ::1] M = M_arr
    cdef double complex[:, ::1] N = N_arr

    with nogil:
        for i in range(D):
            for j in range(D):
                for k in range(D):
                    for l in range(D):
                        s = 0
                        for a in range(nA):
                            s = s + A[a, i, j] * A[a, k, l].conjugate()
                        if s.real == 0 and s.imag == 0:
                            continue
                        w = _weight(E[i] - E[j], E[k] - E[l], beta, sigma, kind)
                        M[k * D + i, l * D + j] = w * s
        for k in range(D):
            for m in range(D):
                s = 0
                for i in range(D):
                    w = _weight(E[i] - E[m], E[i] - E[k], beta, sigma, kind)
                    for a in range(nA):
                        s = s + A[a, i, k].conjugate() * A[a, i, m] * w
                N[k, m] = s
    return M_arr, N_arr
