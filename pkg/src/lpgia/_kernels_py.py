"""Pure numpy/scipy versions of the hot loops.

Each function mirrors the compiled one in ``_kernels.pyx`` argument for
argument. Graphs come in as raw CSR arrays (``indptr``, ``indices``) of a
symmetric 0/1 adjacency without self-loops.
"""
import numpy as np
import scipy.sparse as sp


def propagate(indptr, indices, z0, alpha, max_iter, tol):
    n = indptr.shape[0] - 1
    deg = np.diff(indptr).astype(np.float64)
    isolated = deg == 0
    inv_sqrt = np.zeros(n)
    inv_sqrt[~isolated] = 1.0 / np.sqrt(deg[~isolated])
    adj = sp.csr_matrix((np.ones(indices.shape[0]), indices, indptr), shape=(n, n))
    norm = sp.diags(inv_sqrt) @ adj @ sp.diags(inv_sqrt)
    z0 = np.asarray(z0, dtype=np.float64)
    restart = (1.0 - alpha) * z0
    z = z0.copy()
    it = 0
    while it < max_iter:
        nxt = alpha * (norm @ z) + restart
        nxt[isolated] = z0[isolated]
        delta = np.max(np.abs(nxt - z)) if nxt.size else 0.0
        z = nxt
        it += 1
        if delta < tol:
            break
    return z, it


def neighbor_match_counts(indptr, indices, node_key, nbr_key):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    hit = np.asarray(nbr_key)[indices] == np.asarray(node_key)[rows]
    return np.bincount(rows[hit], minlength=n).astype(np.int64)


def majority_round(indptr, indices, labels, n_classes):
    n = indptr.shape[0] - 1
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    counts = np.zeros((n, n_classes), dtype=np.int64)
    np.add.at(counts, (rows, labels[indices]), 1)
    # argmax returns the first maximum, i.e. the lowest label id on ties
    out = counts.argmax(axis=1)
    isolated = np.diff(indptr) == 0
    out[isolated] = labels[isolated]
    return out


def cluster_margins(base, z, candidates, weights, target, scale):
    agg = scale * (base[None, :] + z[candidates] * weights[candidates][:, None])
    own = agg[:, target].copy()
    agg[:, target] = -np.inf
    if agg.shape[1] == 1:
        return own
    return own - agg.max(axis=1)
