# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every routine here has a numpy twin in ``_pykernels`` that performs the same
floating-point operations in the same order, so the two backends agree
bit-for-bit (Jacobi excepted: its stopping test sums in a different order).
Keep them in sync.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int64_t i64


def csc_dense_accumulate(const i64[::1] indptr, const i64[::1] indices,
                         const double[::1] data, const double[::1, :] A,
                         double[::1, :] out):
    """out += S @ A for CSC ``S`` and Fortran-ordered ``A``.

    Contributions to each output entry are added in CSC storage order.
    """
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1]
    cdef Py_ssize_t c, j, k
    cdef double a
    with nogil:
        for c in range(n):
            for j in range(m):
                a = A[j, c]
                for k in range(indptr[j], indptr[j + 1]):
                    out[indices[k], c] = out[indices[k], c] + data[k] * a


def csc_csr_accumulate(const i64[::1] s_indptr, const i64[::1] s_indices,
                       const double[::1] s_data, const i64[::1] a_indptr,
                       const i64[::1] a_indices, const double[::1] a_data,
                       double[::1, :] out):
    """out += S @ A with ``S`` in CSC and ``A`` in CSR (same row count)."""
    cdef Py_ssize_t m = s_indptr.shape[0] - 1
    cdef Py_ssize_t j, k, q
    cdef i64 row
    cdef double v
    with nogil:
        for j in range(m):
            for k in range(s_indptr[j], s_indptr[j + 1]):
                row = s_indices[k]
                v = s_data[k]
                for q in range(a_indptr[j], a_indptr[j + 1]):
                    out[row, a_indices[q]] = out[row, a_indices[q]] + v * a_data[q]


def sort_rows_find_duplicates(i64[:, ::1] C, const i64[::1] rows):
    """Sort the listed rows of ``C`` in place, return duplicate positions.

    A position ``(i, j)`` is reported when ``C[i, j] == C[i, j + 1]`` after
    sorting; results are ordered row-major, matching ``np.nonzero``.
    """
    cdef Py_ssize_t z = C.shape[1], nr = rows.shape[0]
    cdef Py_ssize_t r, i, j, k, count = 0
    cdef i64 key
    bad_i = np.empty(nr * (z - 1) if z > 1 else 0, dtype=np.int64)
    bad_j = np.empty_like(bad_i)
    cdef i64[::1] bi = bad_i, bj = bad_j
    with nogil:
        for r in range(nr):
            i = rows[r]
            # insertion sort: rows are short (zeta entries)
            for j in range(1, z):
                key = C[i, j]
                k = j - 1
                while k >= 0 and C[i, k] > key:
                    C[i, k + 1] = C[i, k]
                    k = k - 1
                C[i, k + 1] = key
            for j in range(z - 1):
                if C[i, j] == C[i, j + 1]:
                    bi[count] = i
                    bj[count] = j
                    count = count + 1
    return bad_i[:count], bad_j[:count]


def fwht_columns(double[::1, :] X):
    """Unnormalized in-place Walsh-Hadamard transform of each column."""
    cdef Py_ssize_t L = X.shape[0], n = X.shape[1]
    cdef Py_ssize_t c, h, i, j
    cdef double a, b
    with nogil:
        for c in range(n):
            h = 1
            while h < L:
                i = 0
                while i < L:
                    for j in range(i, i + h):
                        a = X[j, c]
                        b = X[j + h, c]
                        X[j, c] = a + b
                        X[j + h, c] = a - b
                    i = i + 2 * h
                h = h * 2


def jacobi_eigenvalues(double[:, ::1] G, double tol, int max_sweeps):
    """Cyclic Jacobi on a symmetric matrix (overwritten). Returns (diag, sweeps)."""
    cdef Py_ssize_t n = G.shape[0]
    cdef Py_ssize_t p, q, k, sweep = 0
    cdef double off, total, app, aqq, apq, theta, t, c, s, gkp, gkq
    while sweep < max_sweeps:
        off = 0.0
        total = 0.0
        for p in range(n):
            total += G[p, p] * G[p, p]
            for q in range(p + 1, n):
                off += 2.0 * G[p, q] * G[p, q]
        total += off
        if off <= tol * tol * total:
            break
        with nogil:
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = G[p, q]
                    if apq == 0.0:
                        continue
                    app = G[p, p]
                    aqq = G[q, q]
                    theta = (aqq - app) / (2.0 * apq)
                    if theta >= 0:
                        t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                    else:
                        t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        gkp = G[k, p]
                        gkq = G[k, q]
                        G[k, p] = c * gkp - s * gkq
                        G[k, q] = s * gkp + c * gkq
                    for k in range(n):
                        gkp = G[p, k]
                        gkq = G[q, k]
                        G[p, k] = c * gkp - s * gkq
                        G[q, k] = s * gkp + c * gkq
        sweep += 1
    out = np.empty(n)
    for p in range(n):
        out[p] = G[p, p]
    return out, sweep
