"""Label propagation: soft smoothing, one-step injection simulation, hard-label rounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels

KINDS = ("raw_softmax", "smoothed", "onehot")


@dataclass(frozen=True, eq=False)
class ProbMatrix:
    """Row-per-node class distributions plus where they came from."""

    rows: np.ndarray
    kind: str = "raw_softmax"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ProbMatrix kind {self.kind!r}")
        rows = np.array(self.rows, dtype=np.float64, copy=True)
        if rows.ndim != 2:
            raise ValueError("ProbMatrix rows must be 2-D")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __array__(self, dtype=None, copy=None):
        return self.rows if dtype is None else self.rows.astype(dtype)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def shape(self):
        return self.rows.shape

    def argmax(self) -> np.ndarray:
        return self.rows.argmax(axis=1)

    @classmethod
    def onehot(cls, labels, n_classes: int) -> "ProbMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        rows = np.zeros((labels.size, n_classes))
        rows[np.arange(labels.size), labels] = 1.0
        return cls(rows, "onehot")


def _rows(z) -> np.ndarray:
    return z.rows if isinstance(z, ProbMatrix) else np.asarray(z, dtype=np.float64)


def normalized_adjacency(adj) -> sp.csr_matrix:
    """``D^-1/2 A D^-1/2`` without self-loops; isolated rows stay zero."""
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.zeros_like(deg, dtype=np.float64)
    inv[deg > 0] = deg[deg > 0] ** -0.5
    d = sp.diags(inv)
    return (d @ adj @ d).tocsr()


def smooth(g, z0, alpha: float = 0.9, T: int = 50, tol: float = 1e-8) -> ProbMatrix:
    """Iterate ``Z <- alpha * S Z + (1 - alpha) Z0`` from ``Z0``.

    Stops after ``T`` sweeps or once the max-abs change drops below ``tol``.
    Zero-degree nodes keep their ``Z0`` row.
    """
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    rows = _rows(z0)
    if rows.shape[0] != g.n:
        raise ValueError(f"Z0 has {rows.shape[0]} rows for a {g.n}-node graph")
    if alpha == 0 or T <= 0:
        return ProbMatrix(rows, "smoothed")
    z, _ = kernels.propagate(g.adjacency, rows, alpha, T, tol)
    return ProbMatrix(z, "smoothed")


def smooth_closed_form(g, z0, alpha: float) -> np.ndarray:
    """Dense fixed point ``(I - alpha S)^-1 (1 - alpha) Z0``; for small graphs only."""
    s = normalized_adjacency(g.adjacency).toarray()
    n = s.shape[0]
    return np.linalg.solve(np.eye(n) - alpha * s, (1 - alpha) * _rows(z0))


def simulate_injection_step(g, z, z0, victim: int, fake_dist, d_u: int, alpha: float) -> np.ndarray:
    """One propagation step for ``victim`` with a fake neighbour attached.

    The victim's own degree becomes ``d_i + 1`` in every neighbour weight and
    the fake node contributes ``fake_dist / sqrt((d_i + 1) d_u)``. Passing
    ``fake_dist=None`` gives the plain, un-injected row update.
    """
    zr, z0r = _rows(z), _rows(z0)
    nbrs = g.adjacency.indices[g.adjacency.indptr[victim]:g.adjacency.indptr[victim + 1]]
    deg = g.degrees
    d_i = deg[victim]
    if fake_dist is None:
        if d_i == 0:
            return z0r[victim].copy()
        w = 1.0 / (np.sqrt(d_i) * np.sqrt(deg[nbrs]))
        return alpha * (w @ zr[nbrs]) + (1 - alpha) * z0r[victim]
    fake_dist = np.asarray(fake_dist, dtype=np.float64)
    if fake_dist.shape != (zr.shape[1],):
        raise ValueError(f"fake distribution needs {zr.shape[1]} entries")
    if d_u < 1:
        raise ValueError("fake node degree must be at least 1")
    w = 1.0 / (np.sqrt(d_i + 1) * np.sqrt(deg[nbrs]))
    out = alpha * (w @ zr[nbrs]) if nbrs.size else np.zeros(zr.shape[1])
    out = out + alpha * fake_dist / (np.sqrt(d_i + 1) * np.sqrt(d_u))
    return out + (1 - alpha) * z0r[victim]


def hard_label_prop(g, y0, T: int, n_classes: int | None = None) -> np.ndarray:
    """``T`` synchronous rounds of neighbour-majority relabelling.

    Ties go to the lowest label id; isolated nodes keep their label.
    """
    y = np.asarray(y0, dtype=np.int64).copy()
    if y.shape != (g.n,):
        raise ValueError("need one label per node")
    L = int(n_classes if n_classes is not None else (y.max() + 1 if y.size else 0))
    for _ in range(T):
        nxt = kernels.majority_round(g.adjacency, y, L)
        if np.array_equal(nxt, y):
            break
        y = nxt
    return y
