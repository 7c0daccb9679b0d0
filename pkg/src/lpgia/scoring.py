"""Target labels and per-node propagation scores for victim selection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .propagation import _rows

VICTIM_POOLS = ("all", "non_train", "test_only")


@dataclass(frozen=True, eq=False)
class NodeScores:
    y: np.ndarray
    c_b: np.ndarray
    h: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s_h: np.ndarray
    beta: float
    candidates: np.ndarray
    groups: dict
    zero_degree: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "y", "c_b", "h", "s1", "s2", "s_h"])
            for v in range(self.y.size):
                w.writerow([v, int(self.y[v]), int(self.c_b[v]), repr(float(self.h[v])),
                            repr(float(self.s1[v])), repr(float(self.s2[v])), repr(float(self.s_h[v]))])


def target_labels(z_tilde, y) -> np.ndarray:
    """Best class other than ``y`` per row; ties go to the lowest id."""
    z = np.array(_rows(z_tilde), dtype=np.float64, copy=True)
    if z.shape[1] < 2:
        raise ValueError("target labels need at least two classes")
    y = np.asarray(y, dtype=np.int64)
    z[np.arange(z.shape[0]), y] = -np.inf
    return z.argmax(axis=1)


def _safe_ratio(num, den):
    out = np.zeros(num.shape, dtype=np.float64)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def similarity(g, c_b) -> np.ndarray:
    """Share of each node's neighbours whose target label matches its own (0 if isolated)."""
    c_b = np.asarray(c_b, dtype=np.int64)
    match = kernels.neighbor_match_counts(g.adjacency, c_b, c_b)
    return _safe_ratio(match.astype(np.float64), g.degrees.astype(np.float64))


def vulnerability_score(g, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    d = g.degrees.astype(np.float64)
    agree = kernels.neighbor_match_counts(g.adjacency, y, y).astype(np.float64)
    return _safe_ratio(agree, d * d + d)


def topology_score(g, y, c_b) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    c_b = np.asarray(c_b, dtype=np.int64)
    same_target = kernels.neighbor_match_counts(g.adjacency, c_b, c_b)
    predicted_target = kernels.neighbor_match_counts(g.adjacency, c_b, y)
    return _safe_ratio((same_target - predicted_target).astype(np.float64), g.degrees.astype(np.float64))


def propagation_score(s1, s2, beta: float) -> np.ndarray:
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta * np.asarray(s1) + (1 - beta) * np.asarray(s2)


def candidate_nodes(g, pool: str = "non_train") -> np.ndarray:
    """Nodes eligible as victims: the chosen split subset minus isolated nodes."""
    if pool not in VICTIM_POOLS:
        raise ValueError(f"unknown victim pool {pool!r}")
    keep = g.degrees > 0
    if pool == "non_train":
        keep &= ~g.mask("train")
    elif pool == "test_only":
        keep &= g.mask("test")
    return np.flatnonzero(keep)


def group_by_target(c_b, candidates) -> dict:
    groups = {}
    for v in candidates:
        groups.setdefault(int(c_b[v]), []).append(int(v))
    return {c: np.array(vs, dtype=np.int64) for c, vs in sorted(groups.items())}


def score_nodes(g, z0, z_tilde, beta: float = 0.5, pool: str = "non_train",
                target_source: str = "smoothed") -> NodeScores:
    """All per-node quantities used by victim selection.

    ``y`` is the argmax of the raw prediction; target labels come from the
    smoothed prediction unless ``target_source='raw'``.
    """
    z0r = _rows(z0)
    y = z0r.argmax(axis=1)
    if target_source == "smoothed":
        c_b = target_labels(z_tilde, y)
    elif target_source == "raw":
        c_b = target_labels(z0r, y)
    else:
        raise ValueError(f"unknown target source {target_source!r}")
    s1 = vulnerability_score(g, y)
    s2 = topology_score(g, y, c_b)
    cand = candidate_nodes(g, pool)
    return NodeScores(
        y=y, c_b=c_b, h=similarity(g, c_b), s1=s1, s2=s2,
        s_h=propagation_score(s1, s2, beta), beta=beta,
        candidates=cand, groups=group_by_target(c_b, cand),
        zero_degree=np.flatnonzero(g.degrees == 0),
    )

