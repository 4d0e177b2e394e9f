# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels.

Semantics are defined by ``_pykernels``; integer outputs must match it
exactly, floating outputs to rounding. The top-k selection keeps a sorted
running buffer per row (O(m*k) per row, beats a full sort for small k),
scanning columns left to right so that ties resolve to the lower index.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log

cnp.import_array()


def topk_rows(object scores_in, Py_ssize_t k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] scores = \
        np.ascontiguousarray(scores_in, dtype=np.float64)
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t m = scores.shape[1]
    if k < 1 or k > m:
        raise ValueError(f"k={k} out of range for {m} columns")
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] idx = np.empty((n, k), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] val = np.empty((n, k), dtype=np.float64)
    cdef Py_ssize_t i, j, pos, filled
    cdef double s
    for i in range(n):
        filled = 0
        for j in range(m):
            s = scores[i, j]
            if filled < k:
                pos = filled
                # strict comparison: an equal value never displaces an
                # earlier index
                while pos > 0 and val[i, pos - 1] < s:
                    val[i, pos] = val[i, pos - 1]
                    idx[i, pos] = idx[i, pos - 1]
                    pos -= 1
                val[i, pos] = s
                idx[i, pos] = j
                filled += 1
            elif s > val[i, k - 1]:
                pos = k - 1
                while pos > 0 and val[i, pos - 1] < s:
                    val[i, pos] = val[i, pos - 1]
                    idx[i, pos] = idx[i, pos - 1]
                    pos -= 1
                val[i, pos] = s
                idx[i, pos] = j
    return idx, val


def topk_mean_rows(object scores_in, Py_ssize_t k):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] scores = \
        np.ascontiguousarray(scores_in, dtype=np.float64)
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t m = scores.shape[1]
    if k < 1 or k > m:
        raise ValueError(f"k={k} out of range for {m} columns")
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] out = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] buf = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t i, j, pos
    cdef double s, acc
    for i in range(n):
        for j in range(k):
            buf[j] = -INFINITY
        for j in range(m):
            s = scores[i, j]
            if s > buf[k - 1]:
                pos = k - 1
                while pos > 0 and buf[pos - 1] < s:
                    buf[pos] = buf[pos - 1]
                    pos -= 1
                buf[pos] = s
        acc = 0.0
        for j in range(k):
            acc += buf[j]
        out[i] = acc / k
    return out


def posterior_columns(object sqdist_in, double inv_two_sigma2, double log_c):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] sqdist = \
        np.ascontiguousarray(sqdist_in, dtype=np.float64)
    cdef Py_ssize_t m = sqdist.shape[0]
    cdef Py_ssize_t n = sqdist.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] p = np.empty((m, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] emax = np.full(n, -INFINITY, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] acc = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] logdenom = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double e, lse
    # row-major passes: column maxima, then shifted exponential sums
    for i in range(m):
        for j in range(n):
            e = -inv_two_sigma2 * sqdist[i, j]
            if e > emax[j]:
                emax[j] = e
    for i in range(m):
        for j in range(n):
            acc[j] += exp(-inv_two_sigma2 * sqdist[i, j] - emax[j])
    for j in range(n):
        lse = emax[j] + log(acc[j])
        if log_c == -INFINITY:
            logdenom[j] = lse
        elif lse >= log_c:
            logdenom[j] = lse + log(1.0 + exp(log_c - lse))
        else:
            logdenom[j] = log_c + log(1.0 + exp(lse - log_c))
    for i in range(m):
        for j in range(n):
            p[i, j] = exp(-inv_two_sigma2 * sqdist[i, j] - logdenom[j])
    return p, logdenom
