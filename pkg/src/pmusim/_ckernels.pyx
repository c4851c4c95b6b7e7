# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of ``_pykernels``.

``recursive_dft`` keeps the reference arithmetic order exactly.
``trailing_sums`` sums each window from scratch (no running-sum drift)
with four interleaved accumulators, so it matches to rounding, not bitwise.
"""
import numpy as np
from libc.stdint cimport int64_t
from libc.math cimport NAN


def recursive_dft(const double[::1] values, const double complex[::1] twiddle,
                  double scale, double complex x0):
    cdef Py_ssize_t n = twiddle.shape[0]
    cdef Py_ssize_t count = values.shape[0] - n + 1
    cdef Py_ssize_t r, k = 0
    cdef double complex x = x0
    out_arr = np.empty(count, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    with nogil:
        out[0] = x
        for r in range(count - 1):
            x = x + scale * (values[r + n] - values[r]) * twiddle[k]
            out[r + 1] = x
            k += 1
            if k == n:
                k = 0
    return out_arr


def trailing_sums(const double[::1] terms, const int64_t[::1] lengths):
    cdef Py_ssize_t size = terms.shape[0]
    cdef Py_ssize_t m, i, start, stop, length
    cdef double a0, a1, a2, a3
    out_arr = np.empty(size, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for m in range(size):
            length = lengths[m]
            if length < 1 or length > m + 1:
                out[m] = NAN
                continue
            start = m - length + 1
            stop = start + (length & ~3)
            a0 = a1 = a2 = a3 = 0.0
            i = start
            while i < stop:
                a0 += terms[i]
                a1 += terms[i + 1]
                a2 += terms[i + 2]
                a3 += terms[i + 3]
                i += 4
            while i <= m:
                a0 += terms[i]
                i += 1
            out[m] = (a0 + a1) + (a2 + a3)
    return out_arr
