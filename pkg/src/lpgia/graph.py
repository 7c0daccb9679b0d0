"""Immutable graph bundles, bundle I/O, cSBM generation and the injected-graph overlay."""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

SPLITS = ("train", "val", "test")
TRAIN, VAL, TEST = 0, 1, 2


class BundleFormatError(ValueError):
    """A bundle file could not be parsed."""

    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = str(path)
        self.lineno = lineno


class BundleValidationError(ValueError):
    """Parsed data violates a GraphBundle invariant."""


class InjectionError(ValueError):
    """An injection plan cannot be materialized on the given graph."""


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _freeze_csr(m):
    m = sp.csr_matrix(m, copy=True)
    m.sort_indices()
    for arr in (m.data, m.indices, m.indptr):
        arr.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class GraphBundle:
    """Undirected, unweighted attributed graph with labels and a data split.

    ``split`` holds integer tags (``TRAIN``, ``VAL``, ``TEST``). Arrays are
    copied and made read-only on construction.
    """

    adjacency: sp.csr_matrix
    features: sp.csr_matrix
    labels: np.ndarray
    split: np.ndarray
    n_classes: int | None = None
    feature_kind: str | None = None
    value_cap: float | None = None

    def __post_init__(self):
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64)
        adj.sum_duplicates()
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise BundleValidationError(f"adjacency must be square, got {adj.shape}")
        if adj.diagonal().any():
            raise BundleValidationError("adjacency has self-loops")
        if adj.nnz and not np.all(adj.data == 1.0):
            raise BundleValidationError("adjacency must be 0/1 without duplicate edges")
        asym = abs(adj - adj.T)
        if asym.nnz and asym.max() > 0:
            r, c = asym.nonzero()
            raise BundleValidationError(f"adjacency is not symmetric: edge ({r[0]}, {c[0]}) has no reverse")

        feats = sp.csr_matrix(self.features, dtype=np.float64)
        feats.eliminate_zeros()
        if feats.shape[0] != n:
            raise BundleValidationError(f"features have {feats.shape[0]} rows for {n} nodes")
        labels = np.asarray(self.labels, dtype=np.int64)
        split = np.asarray(self.split, dtype=np.int8)
        if labels.shape != (n,) or split.shape != (n,):
            raise BundleValidationError("labels and split need one entry per node")
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if n else 0
        if n and (labels.min() < 0 or labels.max() >= n_classes):
            raise BundleValidationError(f"label out of range [0, {n_classes})")
        if n and (split.min() < 0 or split.max() > 2):
            raise BundleValidationError("split tags must be train/val/test")

        kind = self.feature_kind
        if kind is None:
            kind = "binary" if np.all(feats.data == 1.0) else "continuous"
        if kind not in ("binary", "continuous"):
            raise BundleValidationError(f"unknown feature kind {kind!r}")
        if kind == "binary" and not np.all(feats.data == 1.0):
            raise BundleValidationError("binary features must all equal 1")
        cap = self.value_cap
        if cap is None:
            cap = compute_value_cap(feats, kind)

        object.__setattr__(self, "adjacency", _freeze_csr(adj))
        object.__setattr__(self, "features", _freeze_csr(feats))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "split", _frozen(split))
        object.__setattr__(self, "n_classes", int(n_classes))
        object.__setattr__(self, "feature_kind", kind)
        object.__setattr__(self, "value_cap", float(cap))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @property
    def avg_degree(self) -> float:
        return 2.0 * self.m / self.n if self.n else 0.0

    @property
    def n_base(self) -> int:
        return self.n

    def mask(self, which: str) -> np.ndarray:
        return self.split == SPLITS.index(which)

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def homophily(self) -> float:
        """Fraction of edges whose endpoints share a label."""
        r, c = self.adjacency.nonzero()
        if r.size == 0:
            return 0.0
        return float(np.mean(self.labels[r] == self.labels[c]))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.adjacency.indptr, self.adjacency.indices, self.features.indptr,
                    self.features.indices, self.features.data, self.labels, self.split):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(f"{self.n_classes}|{self.feature_kind}|{self.value_cap!r}".encode())
        return h.hexdigest()


def compute_value_cap(features, kind: str) -> float:
    if kind == "binary":
        return 1.0
    vals = np.abs(sp.csr_matrix(features).data)
    return float(np.percentile(vals, 99)) if vals.size else 0.0


def largest_component(g: GraphBundle) -> GraphBundle:
    """Restrict ``g`` to its largest connected component, keeping node order."""
    if g.n == 0:
        return g
    _, comp = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(comp)
    keep = np.flatnonzero(comp == sizes.argmax())
    if keep.size == g.n:
        return g
    return GraphBundle(
        adjacency=g.adjacency[keep][:, keep],
        features=g.features[keep],
        labels=g.labels[keep],
        split=g.split[keep],
        n_classes=g.n_classes,
        feature_kind=g.feature_kind,
    )


# ---------------------------------------------------------------- bundle files

def _lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if "\r" in text:
        raise BundleFormatError(path, text[:text.index("\r")].count("\n") + 1, "CR line ending")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _ints(path, lineno, line, count):
    parts = line.split()
    if len(parts) != count:
        raise BundleFormatError(path, lineno, f"expected {count} integers, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise BundleFormatError(path, lineno, f"non-integer token in {line!r}") from None


def read_edges(path):
    lines = _lines(path)
    if not lines:
        raise BundleFormatError(path, 1, "missing header 'n m'")
    n, m = _ints(path, 1, lines[0], 2)
    if len(lines) - 1 != m:
        raise BundleFormatError(path, len(lines), f"header declares {m} edges, found {len(lines) - 1}")
    edges = np.empty((m, 2), dtype=np.int64)
    seen = set()
    for i, line in enumerate(lines[1:]):
        u, v = _ints(path, i + 2, line, 2)
        if not (0 <= u < n and 0 <= v < n):
            raise BundleFormatError(path, i + 2, f"node id out of range [0, {n})")
        if u == v:
            raise BundleFormatError(path, i + 2, f"self-loop on node {u}")
        if u > v:
            raise BundleFormatError(path, i + 2, f"edge ({u}, {v}) must be listed as u < v")
        if (u, v) in seen:
            raise BundleFormatError(path, i + 2, f"duplicate edge ({u}, {v})")
        seen.add((u, v))
        edges[i] = (u, v)
    return n, edges


def read_features(path, n_expected=None):
    lines = _lines(path)
    if not lines:
        raise BundleFormatError(path, 1, "missing header 'n dim'")
    n, dim = _ints(path, 1, lines[0], 2)
    if n_expected is not None and n != n_expected:
        raise BundleFormatError(path, 1, f"{n} feature rows declared for {n_expected} nodes")
    body = lines[1:]
    if len(body) != n:
        raise BundleFormatError(path, len(lines), f"expected {n} feature rows, found {len(body)}")
    indptr = [0]
    indices, data = [], []
    for i, line in enumerate(body):
        prev = -1
        for tok in line.split():
            idx_s, sep, val_s = tok.partition(":")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise BundleFormatError(path, i + 2, f"bad 'idx:value' token {tok!r}") from None
            if not sep or not np.isfinite(val):
                raise BundleFormatError(path, i + 2, f"bad 'idx:value' token {tok!r}")
            if not 0 <= idx < dim:
                raise BundleFormatError(path, i + 2, f"feature index {idx} out of range [0, {dim})")
            if idx <= prev:
                raise BundleFormatError(path, i + 2, "feature indices must be strictly increasing")
            prev = idx
            indices.append(idx)
            data.append(val)
        indptr.append(len(indices))
    return sp.csr_matrix((np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64),
                          np.array(indptr, dtype=np.int64)), shape=(n, dim))


def read_labels(path, n):
    lines = _lines(path)
    if len(lines) != n:
        raise BundleFormatError(path, len(lines), f"expected {n} labels, found {len(lines)}")
    return np.array([_ints(path, i + 1, line, 1)[0] for i, line in enumerate(lines)], dtype=np.int64)


def read_splits(path, n):
    lines = _lines(path)
    if len(lines) != n:
        raise BundleFormatError(path, len(lines), f"expected {n} split tags, found {len(lines)}")
    out = np.empty(n, dtype=np.int8)
    for i, line in enumerate(lines):
        tag = line.strip()
        if tag not in SPLITS:
            raise BundleFormatError(path, i + 1, f"unknown split tag {line!r}")
        out[i] = SPLITS.index(tag)
    return out


def load_bundle(dir_path, lcc: bool = True, n_classes: int | None = None) -> GraphBundle:
    """Read a bundle directory (edges/features/labels/splits text files)."""
    d = Path(dir_path)
    n, edges = read_edges(d / "edges.txt")
    feats = read_features(d / "features.txt", n)
    labels = read_labels(d / "labels.txt", n)
    split = read_splits(d / "splits.txt", n)
    adj = sp.coo_matrix((np.ones(2 * len(edges)),
                         (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])),
                        shape=(n, n)).tocsr()
    g = GraphBundle(adjacency=adj, features=feats, labels=labels, split=split, n_classes=n_classes)
    return largest_component(g) if lcc else g


def save_bundle(g: GraphBundle, dir_path) -> Path:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(g.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(d / "edges.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{g.n} {g.m}\n")
        for u, v in zip(upper.row[order], upper.col[order]):
            fh.write(f"{u} {v}\n")
    x = g.features
    with open(d / "features.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{g.n} {g.dim}\n")
        for i in range(g.n):
            lo, hi = x.indptr[i], x.indptr[i + 1]
            fh.write(" ".join(f"{k}:{float(v)!r}" for k, v in zip(x.indices[lo:hi], x.data[lo:hi])))
            fh.write("\n")
    with open(d / "labels.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{int(c)}\n" for c in g.labels)
    with open(d / "splits.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{SPLITS[s]}\n" for s in g.split)
    return d


# ------------------------------------------------------------------------ cSBM

def random_split(n: int, rng: np.random.Generator, train: float = 0.1, val: float = 0.1) -> np.ndarray:
    perm = rng.permutation(n)
    n_train = max(1, int(round(train * n)))
    n_val = int(round(val * n))
    split = np.full(n, TEST, dtype=np.int8)
    split[perm[:n_train]] = TRAIN
    split[perm[n_train:n_train + n_val]] = VAL
    return split


def gen_csbm(n: int, L: int, dim: int, p_in: float, p_out: float, mu: float, seed: int,
             density: float = 0.1) -> GraphBundle:
    """Contextual stochastic block model.

    Nodes are assigned round-robin-balanced classes. Each feature coordinate is
    active with probability ``density``; an active value is drawn from
    ``N(mu, 1)`` on the node's class block of coordinates and ``N(0, 1)``
    elsewhere. The split is a random 10/10/80 train/val/test partition.
    """
    if not p_in > p_out >= 0:
        raise ValueError(f"need p_in > p_out >= 0, got p_in={p_in}, p_out={p_out}")
    if not 0 <= p_in <= 1:
        raise ValueError("p_in must be a probability")
    if L < 2 or n < L:
        raise ValueError(f"need n >= L >= 2, got n={n}, L={L}")
    if dim < L:
        raise ValueError(f"need dim >= L, got dim={dim}, L={L}")
    if not 0 < density <= 1:
        raise ValueError("density must be in (0, 1]")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % L)

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    keep = rng.random(iu.size) < np.where(same, p_in, p_out)
    r, c = iu[keep], ju[keep]
    adj = sp.coo_matrix((np.ones(2 * r.size), (np.r_[r, c], np.r_[c, r])), shape=(n, n)).tocsr()

    block = np.arange(dim) * L // dim
    active = rng.random((n, dim)) < density
    values = rng.standard_normal((n, dim)) + mu * (block[None, :] == labels[:, None])
    values[values == 0.0] = np.finfo(float).tiny
    feats = sp.csr_matrix(np.where(active, values, 0.0))

    split = random_split(n, rng)
    return GraphBundle(adjacency=adj, features=feats, labels=labels, split=split, n_classes=L)


# ------------------------------------------------------------- perturbed graph

@dataclass(frozen=True, eq=False)
class PerturbedGraph:
    """A base graph plus injected nodes wired only to original nodes.

    Fake node ``k`` has id ``base.n + k``. ``fake_edges`` holds
    ``(fake_id, original_id)`` pairs.
    """

    base: GraphBundle
    fake_count: int
    fake_edges: tuple
    fake_features: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_base(self) -> int:
        return self.base.n

    @property
    def n(self) -> int:
        return self.base.n + self.fake_count

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def n_classes(self) -> int:
        return self.base.n_classes

    @property
    def adjacency(self) -> sp.csr_matrix:
        if "adj" not in self._cache:
            n0, nf = self.base.n, self.fake_count
            if self.fake_edges:
                e = np.asarray(self.fake_edges, dtype=np.int64)
                b = sp.csr_matrix((np.ones(len(e)), (e[:, 1], e[:, 0] - n0)), shape=(n0, nf))
            else:
                b = sp.csr_matrix((n0, nf))
            q = sp.csr_matrix((nf, nf))
            self._cache["adj"] = _freeze_csr(sp.bmat([[self.base.adjacency, b], [b.T, q]], format="csr"))
        return self._cache["adj"]

    @property
    def features(self) -> sp.csr_matrix:
        if "x" not in self._cache:
            self._cache["x"] = _freeze_csr(sp.vstack([self.base.features, self.fake_features], format="csr"))
        return self._cache["x"]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @property
    def labels(self) -> np.ndarray:
        return np.r_[self.base.labels, np.full(self.fake_count, -1, dtype=np.int64)]

    @property
    def split(self) -> np.ndarray:
        # fake nodes carry tag -1: never in any mask
        return np.r_[self.base.split, np.full(self.fake_count, -1, dtype=np.int8)]

    def mask(self, which: str) -> np.ndarray:
        return self.split == SPLITS.index(which)

    @property
    def victims(self) -> np.ndarray:
        return np.array([v for _, v in self.fake_edges], dtype=np.int64)


def materialize(plan, g: GraphBundle) -> PerturbedGraph:
    """Build the injected graph for ``plan`` on top of ``g``.

    ``plan`` may be an ``InjectionPlan`` or anything with a ``fake_nodes``
    sequence whose items expose ``victims`` and ``feature`` (a list of
    ``(index, value)`` pairs).
    """
    fakes = list(plan.fake_nodes) if plan is not None else []
    n0 = g.n
    edges = []
    seen = {}
    rows, cols, vals = [], [], []
    for k, fake in enumerate(fakes):
        fid = n0 + k
        for v in fake.victims:
            v = int(v)
            if v >= n0:
                raise InjectionError(f"fake node {fid} wired to {v}: fake-fake edges are not allowed")
            if v < 0:
                raise InjectionError(f"fake node {fid} wired to invalid node {v}")
            if v in seen:
                raise InjectionError(f"node {v} attacked by both fake {seen[v]} and fake {fid}")
            seen[v] = fid
            edges.append((fid, v))
        for idx, val in fake.feature:
            if not 0 <= int(idx) < g.dim:
                raise InjectionError(f"fake node {fid} feature index {idx} out of range")
            rows.append(k)
            cols.append(int(idx))
            vals.append(float(val))
    xf = sp.csr_matrix((vals, (rows, cols)), shape=(len(fakes), g.dim), dtype=np.float64)
    return PerturbedGraph(base=g, fake_count=len(fakes), fake_edges=tuple(edges),
                          fake_features=_freeze_csr(xf))


def bundle_dirs_equal(a, b) -> bool:
    names = ("edges.txt", "features.txt", "labels.txt", "splits.txt")
    return all(Path(a, f).read_bytes() == Path(b, f).read_bytes() for f in names)


def is_bundle_dir(path) -> bool:
    return all(os.path.isfile(os.path.join(path, f))
               for f in ("edges.txt", "features.txt", "labels.txt", "splits.txt"))
