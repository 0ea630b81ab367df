# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-batch kernels: quadratic sensing products and the weighted
Gram-matrix block apply.

Both stream the batch once, instance by instance, in fixed index order, so
results are bitwise reproducible run to run.  The instance matrix must be
Fortran-contiguous (columns = instances contiguous); factor blocks are
C-contiguous so each row sweep is a contiguous read.
"""

import numpy as np


def sense_products(double[::1, :] x, double[:, ::1] u, double[:, ::1] v):
    """s_i = (U^T x_i) . (V^T x_i) for every column x_i of x (d x n)."""
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t k = u.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    zu_arr = np.empty(k, dtype=np.float64)
    zv_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] zu = zu_arr
    cdef double[::1] zv = zv_arr
    cdef Py_ssize_t i, j, a
    cdef double xa, acc
    for i in range(n):
        for j in range(k):
            zu[j] = 0.0
            zv[j] = 0.0
        for a in range(d):
            xa = x[a, i]
            for j in range(k):
                zu[j] += u[a, j] * xa
                zv[j] += v[a, j] * xa
        acc = 0.0
        for j in range(k):
            acc += zu[j] * zv[j]
        out[i] = acc
    return out_arr


def weighted_gram_apply(double[::1, :] x, double[::1] r, double[:, ::1] p,
                        double scale):
    """scale * sum_i r_i x_i (x_i^T p) as a dense d x m block."""
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t m = p.shape[1]
    out_arr = np.zeros((d, m), dtype=np.float64)
    t_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] t = t_arr
    cdef Py_ssize_t i, j, a
    cdef double xa, w
    for i in range(n):
        for j in range(m):
            t[j] = 0.0
        for a in range(d):
            xa = x[a, i]
            for j in range(m):
                t[j] += p[a, j] * xa
        w = r[i] * scale
        for a in range(d):
            xa = x[a, i] * w
            for j in range(m):
                out[a, j] += t[j] * xa
    return out_arr
