"""Two-layer GCN / SGC trained from scratch with hand-written backprop."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .propagation import ProbMatrix

log = logging.getLogger(__name__)

VARIANTS = ("gcn", "sgc")
CHECKPOINT_MAGIC = "lpgia-gcn-checkpoint 1"


class TrainingError(RuntimeError):
    """Training produced non-finite values."""


@dataclass(frozen=True, eq=False)
class GcnParams:
    W1: np.ndarray
    W2: np.ndarray
    variant: str = "gcn"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        w1 = np.array(self.W1, dtype=np.float64)
        w2 = np.array(self.W2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2 or w1.shape[1] != w2.shape[0]:
            raise ValueError(f"inconsistent weight shapes {w1.shape} and {w2.shape}")
        if not (np.isfinite(w1).all() and np.isfinite(w2).all()):
            raise ValueError("weights must be finite")
        w1.setflags(write=False)
        w2.setflags(write=False)
        object.__setattr__(self, "W1", w1)
        object.__setattr__(self, "W2", w2)

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def dim(self) -> int:
        return self.W1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    def linearized(self) -> np.ndarray:
        return self.W1 @ self.W2

    def digest(self) -> str:
        import hashlib
        return hashlib.sha256(self.W1.tobytes() + self.W2.tobytes() + self.variant.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class SurrogateEnsemble:
    members: tuple
    W_bar: np.ndarray
    Z0: ProbMatrix

    @property
    def primary(self) -> GcnParams:
        return self.members[0]


def gcn_norm(adj) -> sp.csr_matrix:
    """``D~^-1/2 (A + I) D~^-1/2``."""
    a = sp.csr_matrix(adj) + sp.eye(adj.shape[0], format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    d = sp.diags(deg ** -0.5)
    return (d @ a @ d).tocsr()


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class _Prepared:
    """Graph-side quantities reused across epochs."""

    a_hat: sp.csr_matrix
    ax: np.ndarray
    cache: dict = field(default_factory=dict)


def prepare(g) -> _Prepared:
    a_hat = gcn_norm(g.adjacency)
    ax = np.asarray((a_hat @ g.features).todense())
    return _Prepared(a_hat, ax)


def _forward(w1, w2, variant, prep):
    h1 = prep.ax @ w1
    r = np.maximum(h1, 0.0) if variant == "gcn" else h1
    p = prep.a_hat @ r
    logits = p @ w2
    if not np.isfinite(logits).all():
        raise TrainingError("non-finite activations in forward pass")
    return h1, p, logits


def gcn_forward(params: GcnParams, g, prep: _Prepared | None = None) -> ProbMatrix:
    """Class distributions ``softmax(A~ act(A~ X W1) W2)`` for every node of ``g``."""
    if g.dim != params.dim:
        raise ValueError(f"feature dim {g.dim} does not match weights {params.dim}")
    prep = prep or prepare(g)
    _, _, logits = _forward(params.W1, params.W2, params.variant, prep)
    return ProbMatrix(_softmax(logits), "raw_softmax")


def loss_and_grad(w1, w2, variant, prep, labels, train_mask, weight_decay):
    """Summed cross-entropy over ``train_mask`` plus L2, and its gradients."""
    h1, p, logits = _forward(w1, w2, variant, prep)
    z = _softmax(logits)
    idx = np.flatnonzero(train_mask)
    y = labels[idx]
    zt = z[idx, y]
    loss = -np.sum(np.log(np.maximum(zt, 1e-300)))
    loss += 0.5 * weight_decay * (np.sum(w1 * w1) + np.sum(w2 * w2))

    g_logits = np.zeros_like(z)
    g_logits[idx] = z[idx]
    g_logits[idx, y] -= 1.0
    g_w2 = p.T @ g_logits + weight_decay * w2
    g_r = prep.a_hat.T @ (g_logits @ w2.T)
    if variant == "gcn":
        g_r = g_r * (h1 > 0)
    g_w1 = prep.ax.T @ g_r + weight_decay * w1
    return float(loss), g_w1, g_w2


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def train(g, variant: str = "gcn", hidden: int = 16, epochs: int = 200, lr: float = 0.01,
          seed: int = 0, weight_decay: float = 5e-4, patience: int = 30) -> GcnParams:
    """Fit a 2-layer model on the train split by full-batch gradient descent.

    Keeps the parameters with the best validation accuracy and stops after
    ``patience`` epochs without improvement. Works on a ``GraphBundle`` or a
    ``PerturbedGraph`` (fake nodes carry no label and no split tag).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    labels = np.asarray(g.labels)
    train_mask = g.mask("train")
    if not train_mask.any():
        raise ValueError("train split is empty")
    val_mask = g.mask("val")
    rng = np.random.default_rng(seed)
    w1 = _glorot(rng, g.dim, hidden)
    w2 = _glorot(rng, hidden, g.n_classes)
    prep = prepare(g)

    best = (w1.copy(), w2.copy())
    best_acc, stale = -1.0, 0
    for epoch in range(epochs):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, g1, g2 = loss_and_grad(w1, w2, variant, prep, labels, train_mask, weight_decay)
                if not np.isfinite(loss):
                    raise TrainingError("loss diverged")
                w1 -= lr * g1
                w2 -= lr * g2
                if not np.isfinite(w1).all() or not np.isfinite(w2).all():
                    raise TrainingError("non-finite weights")
                if not val_mask.any():
                    best = (w1, w2)
                    continue
                _, _, logits = _forward(w1, w2, variant, prep)
        except TrainingError as exc:
            raise TrainingError(f"{exc} at epoch {epoch} (seed={seed}, lr={lr})") from None
        acc = float(np.mean(logits[val_mask].argmax(axis=1) == labels[val_mask]))
        # ties move the checkpoint forward; only strict gains reset patience
        stale = 0 if acc > best_acc else stale + 1
        if acc >= best_acc:
            best_acc = acc
            best = (w1.copy(), w2.copy())
        if stale >= patience:
            log.debug("early stop at epoch %d (val acc %.4f)", epoch, best_acc)
            break
    return GcnParams(best[0], best[1], variant)


def _threads() -> int:
    env = os.environ.get("LPGIA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def member_seeds(seed: int, R: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(R)]


def build_ensemble(g, R: int = 20, seed: int = 0, variant: str = "gcn", **train_kw) -> SurrogateEnsemble:
    """Train ``R`` surrogates with derived seeds and average their linearizations."""
    if R < 1:
        raise ValueError("ensemble needs at least one member")
    seeds = member_seeds(seed, R)
    workers = min(_threads(), R)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(lambda s: train(g, variant=variant, seed=s, **train_kw), seeds))
    else:
        members = [train(g, variant=variant, seed=s, **train_kw) for s in seeds]
    w_bar = np.mean([m.linearized() for m in members], axis=0)
    z0 = gcn_forward(members[0], g)
    return SurrogateEnsemble(tuple(members), w_bar, z0)


def save_params(params: GcnParams, path) -> Path:
    """Text checkpoint: magic line, ``variant dim hidden L``, then W1 and W2 rows."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(f"{params.variant} {params.dim} {params.hidden} {params.n_classes}\n")
        for w in (params.W1, params.W2):
            for row in w:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path


def load_params(path) -> GcnParams:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    variant, dim, hidden, n_classes = lines[1].split()
    dim, hidden, n_classes = int(dim), int(hidden), int(n_classes)
    body = [np.array(line.split(), dtype=np.float64) for line in lines[2:]]
    if len(body) != dim + hidden:
        raise ValueError(f"{path}: expected {dim + hidden} weight rows, found {len(body)}")
    return GcnParams(np.vstack(body[:dim]).reshape(dim, hidden),
                     np.vstack(body[dim:]).reshape(hidden, n_classes), variant)
