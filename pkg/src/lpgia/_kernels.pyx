# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops for propagation, neighbor counting and cluster scoring.

Semantics match ``lpgia._kernels_py`` exactly; see that module for the
argument conventions.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()

ctypedef cnp.int32_t idx_t


def propagate(const idx_t[::1] indptr, const idx_t[::1] indices, z0_in, double alpha,
              int max_iter, double tol):
    cdef const double[:, ::1] z0 = np.ascontiguousarray(z0_in, dtype=np.float64)
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t L = z0.shape[1]
    cdef double[:, ::1] cur = np.array(z0, dtype=np.float64, copy=True)
    cdef double[:, ::1] nxt = np.empty((n, L), dtype=np.float64)
    cdef double[::1] inv_sqrt = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] tmp
    cdef Py_ssize_t i, p, c, j
    cdef double w, acc, delta, diff
    cdef int it = 0

    for i in range(n):
        if indptr[i + 1] > indptr[i]:
            inv_sqrt[i] = 1.0 / sqrt(<double>(indptr[i + 1] - indptr[i]))

    while it < max_iter:
        delta = 0.0
        for i in range(n):
            if indptr[i + 1] == indptr[i]:
                for c in range(L):
                    nxt[i, c] = z0[i, c]
            else:
                for c in range(L):
                    nxt[i, c] = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    j = indices[p]
                    w = inv_sqrt[i] * inv_sqrt[j]
                    for c in range(L):
                        nxt[i, c] += w * cur[j, c]
                for c in range(L):
                    nxt[i, c] = alpha * nxt[i, c] + (1.0 - alpha) * z0[i, c]
            for c in range(L):
                diff = fabs(nxt[i, c] - cur[i, c])
                if diff > delta:
                    delta = diff
        tmp = cur
        cur = nxt
        nxt = tmp
        it += 1
        if delta < tol:
            break
    return np.asarray(cur), it


def neighbor_match_counts(const idx_t[::1] indptr, const idx_t[::1] indices, node_key_in, nbr_key_in):
    cdef const cnp.int64_t[::1] node_key = np.ascontiguousarray(node_key_in, dtype=np.int64)
    cdef const cnp.int64_t[::1] nbr_key = np.ascontiguousarray(nbr_key_in, dtype=np.int64)
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.int64_t[::1] out = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t i, p
    cdef cnp.int64_t key, cnt
    for i in range(n):
        key = node_key[i]
        cnt = 0
        for p in range(indptr[i], indptr[i + 1]):
            if nbr_key[indices[p]] == key:
                cnt += 1
        out[i] = cnt
    return np.asarray(out)


def majority_round(const idx_t[::1] indptr, const idx_t[::1] indices, labels_in, int n_classes):
    cdef const cnp.int64_t[::1] labels = np.ascontiguousarray(labels_in, dtype=np.int64)
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.int64_t[::1] out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = np.zeros(n_classes, dtype=np.int64)
    cdef Py_ssize_t i, p, c, best
    for i in range(n):
        if indptr[i + 1] == indptr[i]:
            out[i] = labels[i]
            continue
        for c in range(n_classes):
            counts[c] = 0
        for p in range(indptr[i], indptr[i + 1]):
            counts[labels[indices[p]]] += 1
        best = 0
        for c in range(1, n_classes):
            if counts[c] > counts[best]:
                best = c
        out[i] = best
    return np.asarray(out)


def cluster_margins(base_in, z_in, candidates_in, weights_in, int target, double scale):
    cdef const double[::1] base = np.ascontiguousarray(base_in, dtype=np.float64)
    cdef const double[:, ::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef const cnp.int64_t[::1] cand = np.ascontiguousarray(candidates_in, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef Py_ssize_t k = cand.shape[0]
    cdef Py_ssize_t L = z.shape[1]
    cdef double[::1] out = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t a, c, j
    cdef double own, other, v
    for a in range(k):
        j = cand[a]
        own = scale * (base[target] + z[j, target] * w[j])
        other = -INFINITY
        for c in range(L):
            if c == target:
                continue
            v = scale * (base[c] + z[j, c] * w[j])
            if v > other:
                other = v
        out[a] = own - other if L > 1 else own
    return np.asarray(out)
