# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kNN kernels: the hot loop of per-epoch LID scoring.

Same numerics contract as the numpy fallback (``_kernels_py``): squared
distances accumulated in ascending coordinate order, ascending value
selection, sqrt applied last.  Compiled with -ffp-contract=off so the
accumulation matches the fallback bitwise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def query_dists(double[::1] query, double[:, ::1] refs):
    """Euclidean distances from ``query`` to every row of ``refs``, in row order."""
    cdef Py_ssize_t n = refs.shape[0]
    cdef Py_ssize_t d = refs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t t, j
    cdef double s, diff
    for t in range(n):
        s = 0.0
        for j in range(d):
            diff = refs[t, j] - query[j]
            s += diff * diff
        ov[t] = sqrt(s)
    return out


def batch_knn(double[:, ::1] points, Py_ssize_t k):
    """Per-row profiles of the k smallest distances to the *other* rows.

    Equivalent to sorting each row of the full pairwise distance matrix
    and dropping the leading (self) zero; implemented as an insertion
    pass that keeps only the k+1 smallest squared distances per row.
    Requires ``len(points) >= k + 1``.

    Distances for a block of rows are accumulated coordinate by
    coordinate over a transposed copy, so the inner loop runs over
    contiguous memory and vectorizes while each pair's additions still
    happen in ascending coordinate order.
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t m = k + 1
    cdef Py_ssize_t block = 16
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cols_arr = np.ascontiguousarray(
        np.asarray(points).T
    )
    cdef double[:, ::1] cols = cols_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=2] acc_arr = np.empty((block, n), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t i0, ib, bi, c, t, j, pos
    cdef double v, v2, s, diff, diff2, inf = np.inf
    cdef double* crow
    cdef double* arow
    cdef double* arow2

    for i0 in range(0, n, block):
        ib = block if n - i0 >= block else n - i0
        crow = &cols[0, 0]
        for bi in range(ib):
            v = crow[i0 + bi]
            arow = &acc[bi, 0]
            for t in range(n):
                diff = v - crow[t]
                arow[t] = diff * diff
        for c in range(1, d):
            crow = &cols[c, 0]
            bi = 0
            while bi + 1 < ib:
                v = crow[i0 + bi]
                v2 = crow[i0 + bi + 1]
                arow = &acc[bi, 0]
                arow2 = &acc[bi + 1, 0]
                for t in range(n):
                    diff = v - crow[t]
                    diff2 = v2 - crow[t]
                    arow[t] += diff * diff
                    arow2[t] += diff2 * diff2
                bi += 2
            if bi < ib:
                v = crow[i0 + bi]
                arow = &acc[bi, 0]
                for t in range(n):
                    diff = v - crow[t]
                    arow[t] += diff * diff
        for bi in range(ib):
            for pos in range(m):
                buf[pos] = inf
            for t in range(n):
                s = acc[bi, t]
                if s < buf[m - 1]:
                    pos = m - 1
                    while pos > 0 and buf[pos - 1] > s:
                        buf[pos] = buf[pos - 1]
                        pos -= 1
                    buf[pos] = s
            for j in range(k):
                ov[i0 + bi, j] = sqrt(buf[j + 1])
    return out
