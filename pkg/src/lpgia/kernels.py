"""Backend selection for the hot loops.

The compiled extension is used when it was built and imports cleanly; set
``LPGIA_PURE_PYTHON=1`` to force the numpy fallback. Callers always go
through the wrappers here, which normalize the CSR index dtype.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LPGIA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _csr(adj):
    return (np.ascontiguousarray(adj.indptr, dtype=np.int32),
            np.ascontiguousarray(adj.indices, dtype=np.int32))


def propagate(adj, z0, alpha, max_iter, tol, impl=None):
    """Jacobi iteration of ``Z <- alpha * S Z + (1 - alpha) Z0``.

    ``S`` is the symmetric normalization of ``adj``; zero-degree rows are
    pinned to ``Z0``. Returns ``(Z, iterations)``.
    """
    indptr, indices = _csr(adj)
    z0 = np.ascontiguousarray(z0, dtype=np.float64)
    return (impl or _impl).propagate(indptr, indices, z0, float(alpha), int(max_iter), float(tol))


def neighbor_match_counts(adj, node_key, nbr_key, impl=None):
    """Per node i, count neighbors j with ``nbr_key[j] == node_key[i]``."""
    indptr, indices = _csr(adj)
    return (impl or _impl).neighbor_match_counts(
        indptr, indices, np.asarray(node_key, dtype=np.int64), np.asarray(nbr_key, dtype=np.int64))


def majority_round(adj, labels, n_classes, impl=None):
    indptr, indices = _csr(adj)
    return (impl or _impl).majority_round(indptr, indices, np.asarray(labels, dtype=np.int64),
                                          int(n_classes))


def cluster_margins(base, z, candidates, weights, target, scale, impl=None):
    """Target-label margin of ``scale * (base + weights[j] * z[j])`` per candidate j."""
    return (impl or _impl).cluster_margins(
        np.ascontiguousarray(base, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        np.asarray(candidates, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(target), float(scale))


def implementations():
    """All importable backends by name, for cross-checks and benchmarks."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out
