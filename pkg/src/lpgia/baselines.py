"""Ablation strategies sharing the injector's budgets and constraints.

Each axis of an attack (which victim seeds a cluster, how the cluster grows,
how the fake feature is built) can be swapped independently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .injector import (
    AttackConfig,
    InjectionPlan,
    _cluster_ours,
    _feature_ours,
    _rank_ours,
    group_pool,
    inject,
    pick_seed,
)

NODE_STRATEGIES = ("ours", "random", "degree")
CLUSTER_STRATEGIES = ("ours", "random", "top_nodes")
FEATURE_STRATEGIES = ("ours", "random_copy", "most_frequency")


@dataclass(frozen=True)
class StrategySpec:
    node_strategy: str = "ours"
    cluster_strategy: str = "ours"
    feature_strategy: str = "ours"

    def __post_init__(self):
        if self.node_strategy not in NODE_STRATEGIES:
            raise ValueError(f"node strategy must be one of {NODE_STRATEGIES}")
        if self.cluster_strategy not in CLUSTER_STRATEGIES:
            raise ValueError(f"cluster strategy must be one of {CLUSTER_STRATEGIES}")
        if self.feature_strategy not in FEATURE_STRATEGIES:
            raise ValueError(f"feature strategy must be one of {FEATURE_STRATEGIES}")

    @classmethod
    def parse(cls, text: str) -> "StrategySpec":
        """``"node,cluster,feature"``; ``random`` on the feature axis means ``random_copy``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"strategy needs three comma-separated parts, got {text!r}")
        if parts[2] == "random":
            parts[2] = "random_copy"
        return cls(*parts)

    def as_dict(self):
        return {"node": self.node_strategy, "cluster": self.cluster_strategy,
                "feature": self.feature_strategy}


OURS = StrategySpec()
ALL_RANDOM = StrategySpec("random", "random", "random_copy")


def _rank_random(g, scores, rng):
    return rng.uniform(0.0, 1.0, size=g.n)


def _rank_degree(g, scores, rng):
    d = g.degrees.astype(np.float64)
    out = np.zeros(g.n)
    np.divide(1.0, d, out=out, where=d > 0)
    return out


def _cluster_random(scores, z, budget, n_k, degrees, available, rank, rng):
    seed = pick_seed(available, rank)
    c_u = int(scores.c_b[seed])
    pool = group_pool(scores, c_u, available, seed)
    take = min(budget - 1, pool.size)
    extra = rng.choice(pool, size=take, replace=False) if take else []
    return c_u, [seed] + [int(v) for v in extra]


def _cluster_top_nodes(scores, z, budget, n_k, degrees, available, rank, rng):
    seed = pick_seed(available, rank)
    c_u = int(scores.c_b[seed])
    pool = group_pool(scores, c_u, available, seed)
    ordered = pool[np.lexsort((pool, -rank[pool]))]
    return c_u, [seed] + [int(v) for v in ordered[:budget - 1]]


def _feature_random_copy(ctx, c_u, cluster, z, rng):
    g = ctx.g
    src = int(rng.integers(g.n))
    x = g.features
    idx = x.indices[x.indptr[src]:x.indptr[src + 1]]
    val = x.data[x.indptr[src]:x.indptr[src + 1]]
    if idx.size > ctx.delta_x:
        keep = np.lexsort((idx, -val))[:ctx.delta_x]
        idx, val = idx[keep], val[keep]
    val = np.clip(val, -g.value_cap, g.value_cap)
    order = np.argsort(idx)
    return [(int(k), float(v)) for k, v in zip(idx[order], val[order]) if v != 0]


def _feature_most_frequency(ctx, c_u, cluster, z, rng):
    x = ctx.g.features[ctx.labels == c_u]
    counts = np.bincount(x.indices, minlength=ctx.g.dim)
    present = np.flatnonzero((counts > 0) & (ctx.x_prime[c_u] > 0))
    top = present[np.lexsort((present, -counts[present]))][:ctx.delta_x]
    return [(int(k), float(ctx.x_prime[c_u, k])) for k in np.sort(top)]


_RANK = {"ours": _rank_ours, "random": _rank_random, "degree": _rank_degree}
_CLUSTER = {"ours": _cluster_ours, "random": _cluster_random, "top_nodes": _cluster_top_nodes}
_FEATURE = {"ours": _feature_ours, "random_copy": _feature_random_copy,
            "most_frequency": _feature_most_frequency}


def baseline_attack(g, ensemble, cfg: AttackConfig, spec: StrategySpec = OURS) -> InjectionPlan:
    """Injection with the chosen strategy on each axis; ``OURS`` reproduces ``run_attack``."""
    return inject(g, ensemble, cfg, rank_fn=_RANK[spec.node_strategy],
                  cluster_fn=_CLUSTER[spec.cluster_strategy],
                  feature_fn=_FEATURE[spec.feature_strategy], strategy=spec.as_dict())


def ablation_grid() -> dict:
    """The full-method spec and every single-axis replacement of it."""
    grid = {"ours": OURS}
    for s in NODE_STRATEGIES[1:]:
        grid[f"node={s}"] = StrategySpec(node_strategy=s)
    for s in CLUSTER_STRATEGIES[1:]:
        grid[f"cluster={s}"] = StrategySpec(cluster_strategy=s)
    for s in FEATURE_STRATEGIES[1:]:
        grid[f"feature={s}"] = StrategySpec(feature_strategy=s)
    return grid
