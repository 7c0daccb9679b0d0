"""Sequential node injection: budgets, greedy victim clusters, malicious features."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .graph import GraphBundle, materialize
from .propagation import _rows, smooth
from .scoring import VICTIM_POOLS, NodeScores, score_nodes
from .surrogate import SurrogateEnsemble, gcn_forward

log = logging.getLogger(__name__)

PLAN_FORMAT = "lpgia-plan/1"


class AttackError(RuntimeError):
    """The attack could not proceed; ``plan`` holds what was built so far."""

    def __init__(self, msg, plan=None):
        super().__init__(msg)
        self.plan = plan


@dataclass
class AttackConfig:
    n_fake: int | None = None
    ratio: float | None = None
    alpha: float = 0.9
    beta: float = 0.5
    n_k: int = 10
    R: int = 20
    seed: int = 0
    victim_pool: str = "non_train"
    recompute_smooth: bool = True
    target_source: str = "smoothed"
    T: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        if self.n_k < 1:
            raise ValueError("n_k must be at least 1")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.R < 1:
            raise ValueError("ensemble size R must be at least 1")
        if self.victim_pool not in VICTIM_POOLS:
            raise ValueError(f"victim_pool must be one of {VICTIM_POOLS}")
        if self.n_fake is not None and self.n_fake < 0:
            raise ValueError("n_fake must be non-negative")
        if self.ratio is not None and self.ratio < 0:
            raise ValueError("ratio must be non-negative")

    def resolve_n_fake(self, n: int) -> int:
        if self.n_fake is not None:
            return int(self.n_fake)
        if self.ratio is not None:
            return int(round(self.ratio * n))
        raise ValueError("set either n_fake or ratio")


@dataclass
class FakeNode:
    fake_id: int
    budget: int
    pseudo_label: int
    victims: list
    feature: list

    def to_dict(self):
        return {
            "fake_id": int(self.fake_id),
            "budget": int(self.budget),
            "pseudo_label": int(self.pseudo_label),
            "victims": [int(v) for v in self.victims],
            "feature": [[int(k), float(x)] for k, x in self.feature],
        }


@dataclass
class InjectionPlan:
    n_base: int
    dim: int
    delta_x: int
    budgets: list
    fake_nodes: list = field(default_factory=list)
    strategy: dict = field(default_factory=lambda: {"node": "ours", "cluster": "ours", "feature": "ours"})
    short_clusters: list = field(default_factory=list)
    empty_features: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def total_edge_budget(self) -> int:
        return int(sum(self.budgets))

    @property
    def total_edges(self) -> int:
        return sum(len(f.victims) for f in self.fake_nodes)

    @property
    def n_fake(self) -> int:
        return len(self.fake_nodes)

    def victims(self) -> list:
        return [v for f in self.fake_nodes for v in f.victims]

    def to_dict(self) -> dict:
        return {
            "format": PLAN_FORMAT,
            "strategy": dict(self.strategy),
            "n_base": int(self.n_base),
            "dim": int(self.dim),
            "delta_x": int(self.delta_x),
            "budgets": [int(b) for b in self.budgets],
            "fake_nodes": [f.to_dict() for f in self.fake_nodes],
            "audit": {
                "total_edges": self.total_edges,
                "total_edge_budget": self.total_edge_budget,
                "delta_x": int(self.delta_x),
                "short_clusters": [int(i) for i in self.short_clusters],
                "empty_features": [int(i) for i in self.empty_features],
                "warnings": list(self.warnings),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "InjectionPlan":
        if d.get("format") != PLAN_FORMAT:
            raise ValueError(f"unsupported plan format {d.get('format')!r}")
        audit = d.get("audit", {})
        return cls(
            n_base=d["n_base"], dim=d["dim"], delta_x=d["delta_x"], budgets=list(d["budgets"]),
            fake_nodes=[FakeNode(f["fake_id"], f["budget"], f["pseudo_label"], list(f["victims"]),
                                 [(int(k), float(x)) for k, x in f["feature"]]) for f in d["fake_nodes"]],
            strategy=dict(d.get("strategy", {})),
            short_clusters=list(audit.get("short_clusters", [])),
            empty_features=list(audit.get("empty_features", [])),
            warnings=list(audit.get("warnings", [])),
        )

    @classmethod
    def load(cls, path) -> "InjectionPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ------------------------------------------------------------------- budgets

def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def total_edge_budget(g, n_fake: int) -> int:
    # integer arithmetic: floor(n_fake * 2m / n) without float rounding
    return (n_fake * 2 * g.m) // g.n if g.n else 0


def sample_budgets(g, n_fake: int, seed=0) -> list:
    """Per-fake-node edge budgets drawn from the degree distribution of ``g``.

    Samples are clamped to at least one edge, then random unit steps bring the
    total to ``floor(n_fake * avg_degree)``.
    """
    if n_fake < 1:
        raise ValueError("n_fake must be at least 1")
    total = total_edge_budget(g, n_fake)
    if total < n_fake:
        raise ValueError(f"edge budget {total} cannot give each of {n_fake} fake nodes an edge")
    rng = _rng(seed)
    budgets = np.maximum(rng.choice(g.degrees, size=n_fake, replace=True), 1).astype(np.int64)
    diff = int(budgets.sum()) - total
    while diff > 0:
        shrinkable = np.flatnonzero(budgets > 1)
        budgets[shrinkable[rng.integers(shrinkable.size)]] -= 1
        diff -= 1
    while diff < 0:
        budgets[rng.integers(n_fake)] += 1
        diff += 1
    return [int(b) for b in budgets]


def feature_budget(g) -> int:
    """Average nonzero count per feature row, floored."""
    return int(g.features.nnz // g.n) if g.n else 0


def element_values(g, labels, cap: float | None = None) -> np.ndarray:
    """Per (class, feature) mean absolute value over the class's nonzero entries.

    Entries where no node of the class is nonzero are 0. With ``cap``, entries
    above the cap are also zeroed: such an element has no admissible value, so
    feature scoring never selects it.
    """
    labels = np.asarray(labels, dtype=np.int64)
    L = g.n_classes
    member = sp.csr_matrix((np.ones(labels.size), (labels, np.arange(labels.size))), shape=(L, g.n))
    x = sp.csr_matrix(g.features)
    mag = abs(x)
    nz = x.copy()
    nz.data = (nz.data != 0).astype(np.float64)
    total = np.asarray((member @ mag).todense())
    count = np.asarray((member @ nz).todense())
    out = np.zeros_like(total)
    np.divide(total, count, out=out, where=count > 0)
    absent = np.flatnonzero(np.bincount(labels, minlength=L) == 0)
    if absent.size:
        log.warning("classes %s have no nodes; their feature values are all zero", absent.tolist())
    if cap is not None:
        out[out > cap] = 0.0
    return out


def attack_labels(g, z0) -> np.ndarray:
    """Labels the attacker works with: surrogate predictions, train labels as known."""
    y = _rows(z0).argmax(axis=1)
    train = g.mask("train")
    y[train] = g.labels[train]
    return y


# ------------------------------------------------------------------ clusters

def inv_sqrt_degree(degrees) -> np.ndarray:
    return 1.0 / np.sqrt(np.asarray(degrees, dtype=np.float64) + 1.0)


def aggregated_dist(cluster, z_tilde, d_u: int, degrees) -> np.ndarray:
    """``(1/sqrt(d_u)) * sum_i z_i / sqrt(d_i + 1)`` over the cluster members."""
    cluster = np.asarray(cluster, dtype=np.int64)
    if cluster.size == 0:
        raise ValueError("cluster must be non-empty")
    if d_u < cluster.size:
        raise ValueError("fake node degree is smaller than its cluster")
    z = _rows(z_tilde)
    w = inv_sqrt_degree(np.asarray(degrees)[cluster])
    return (w @ z[cluster]) / math.sqrt(d_u)


def cluster_score(z_agg, c_u: int) -> float:
    """Margin of ``c_u`` over the best other class."""
    z = np.asarray(z_agg, dtype=np.float64)
    others = np.delete(z, c_u)
    return float(z[c_u] - others.max()) if others.size else float(z[c_u])


def _first_best(nodes, key):
    """Node with the largest ``key``; lowest id on ties."""
    nodes = np.asarray(nodes)
    return int(nodes[np.lexsort((nodes, -key[nodes]))[0]])


def pick_seed(available, rank_score) -> int:
    pool = np.flatnonzero(available)
    if pool.size == 0:
        raise AttackError("no unattacked candidate victims remain")
    return _first_best(pool, rank_score)


def group_pool(scores: NodeScores, c_u: int, available, exclude: int) -> np.ndarray:
    group = scores.groups.get(int(c_u), np.empty(0, dtype=np.int64))
    group = group[available[group]]
    return group[group != exclude]


def derive_cluster(scores: NodeScores, z_tilde, budget: int, n_k: int, degrees, available,
                   rank_score=None):
    """Greedy victim cluster for one fake node.

    Starts from the best-ranked available candidate, takes its target label as
    the pseudo label, then repeatedly keeps the ``n_k`` group members with the
    largest cluster score and adds the best-ranked of those. ``rank_score``
    defaults to the propagation score. Returns ``(c_u, victims)``; the cluster
    is short when the group runs dry.
    """
    rank = scores.s_h if rank_score is None else np.asarray(rank_score)
    available = np.asarray(available, dtype=bool)
    z = _rows(z_tilde)
    seed = pick_seed(available, rank)
    c_u = int(scores.c_b[seed])
    pool = group_pool(scores, c_u, available, seed)
    w = inv_sqrt_degree(degrees)
    base = z[seed] * w[seed]
    scale = 1.0 / math.sqrt(budget)
    cluster = [seed]
    while len(cluster) < budget and pool.size:
        margins = kernels.cluster_margins(base, z, pool, w, c_u, scale)
        retained = pool[np.lexsort((pool, -margins))[:n_k]]
        pick = _first_best(retained, rank)
        cluster.append(pick)
        base = base + z[pick] * w[pick]
        pool = pool[pool != pick]
    return c_u, cluster


# ------------------------------------------------------------------ features

def competing_label(cluster, z_tilde, c_u: int, degrees) -> int:
    z = _rows(z_tilde)
    cluster = np.asarray(cluster, dtype=np.int64)
    agg = inv_sqrt_degree(np.asarray(degrees)[cluster]) @ z[cluster]
    agg[c_u] = -np.inf
    return int(agg.argmax())


def generate_feature(c_u: int, cluster, z_tilde, W_bar, x_prime, delta_x: int, seed, degrees):
    """Sparse malicious feature as a list of ``(index, value)`` pairs.

    Elements are scored by how much the averaged linear weights favour ``c_u``
    over the strongest competing label of the cluster, scaled by the class's
    typical value. ``delta_x`` elements are drawn at random from the best
    ``2 * delta_x`` positive scorers and set to their typical value.
    """
    W_bar = np.asarray(W_bar)
    if W_bar.shape[1] != x_prime.shape[0]:
        raise ValueError("W_bar needs one column per class")
    c_z = competing_label(cluster, z_tilde, c_u, degrees)
    s_x = (W_bar[:, c_u] - W_bar[:, c_z]) * x_prime[c_u]
    pos = np.flatnonzero(s_x > 0)
    ranked = pos[np.lexsort((pos, -s_x[pos]))]
    if ranked.size <= delta_x:
        chosen = ranked
    else:
        top = ranked[:min(2 * delta_x, W_bar.shape[0])]
        chosen = _rng(seed).choice(top, size=delta_x, replace=False)
    chosen = np.sort(chosen)
    return [(int(k), float(x_prime[c_u, k])) for k in chosen]


# -------------------------------------------------------------------- engine

def _rank_ours(g, scores, rng):
    return scores.s_h


def _cluster_ours(scores, z, budget, n_k, degrees, available, rank, rng):
    return derive_cluster(scores, z, budget, n_k, degrees, available, rank)


def _feature_ours(ctx, c_u, cluster, z, rng):
    return generate_feature(c_u, cluster, z, ctx.W_bar, ctx.x_prime, ctx.delta_x, rng, ctx.degrees)


@dataclass
class AttackContext:
    """Everything computed once before the injection loop."""

    g: GraphBundle
    cfg: AttackConfig
    n_fake: int
    budgets: list
    delta_x: int
    labels: np.ndarray
    x_prime: np.ndarray
    z_tilde: np.ndarray
    scores: NodeScores
    W_bar: np.ndarray
    degrees: np.ndarray


def prepare_attack(g: GraphBundle, ensemble: SurrogateEnsemble, cfg: AttackConfig, budget_rng) -> AttackContext:
    n_fake = cfg.resolve_n_fake(g.n)
    budgets = sample_budgets(g, n_fake, budget_rng) if n_fake else []
    labels = attack_labels(g, ensemble.Z0)
    z_tilde = smooth(g, ensemble.Z0, cfg.alpha, cfg.T, cfg.tol)
    scores = score_nodes(g, ensemble.Z0, z_tilde, cfg.beta, cfg.victim_pool, cfg.target_source)
    return AttackContext(
        g=g, cfg=cfg, n_fake=n_fake, budgets=budgets, delta_x=feature_budget(g), labels=labels,
        x_prime=element_values(g, labels, cap=g.value_cap), z_tilde=z_tilde.rows, scores=scores,
        W_bar=np.asarray(ensemble.W_bar), degrees=g.degrees,
    )


def inject(g: GraphBundle, ensemble: SurrogateEnsemble, cfg: AttackConfig, rank_fn=_rank_ours,
           cluster_fn=_cluster_ours, feature_fn=_feature_ours, strategy=None) -> InjectionPlan:
    """Run the sequential injection loop with pluggable node/cluster/feature rules."""
    budget_rng, feature_rng, strategy_rng = (np.random.default_rng(s)
                                             for s in np.random.SeedSequence(cfg.seed).spawn(3))
    ctx = prepare_attack(g, ensemble, cfg, budget_rng)
    plan = InjectionPlan(n_base=g.n, dim=g.dim, delta_x=ctx.delta_x, budgets=ctx.budgets)
    if strategy:
        plan.strategy = dict(strategy)
    if ctx.n_fake == 0:
        return plan

    rank = rank_fn(g, ctx.scores, strategy_rng)
    available = np.zeros(g.n, dtype=bool)
    available[ctx.scores.candidates] = True
    z = ctx.z_tilde
    primary = ensemble.primary
    for k, budget in enumerate(ctx.budgets):
        fid = g.n + k
        if not available.any():
            msg = f"candidate pool exhausted after {k} of {ctx.n_fake} fake nodes"
            log.warning(msg)
            plan.warnings.append(msg)
            break
        try:
            c_u, cluster = cluster_fn(ctx.scores, z, budget, cfg.n_k, ctx.degrees, available, rank,
                                      strategy_rng)
            feature = feature_fn(ctx, c_u, cluster, z, feature_rng)
        except Exception as exc:
            raise AttackError(f"fake node {fid}: {exc}", plan) from exc
        available[np.asarray(cluster, dtype=np.int64)] = False
        if len(cluster) < budget:
            plan.short_clusters.append(fid)
        if not feature:
            plan.empty_features.append(fid)
        plan.fake_nodes.append(FakeNode(fid, int(budget), int(c_u), [int(v) for v in cluster], feature))
        if cfg.recompute_smooth and k + 1 < ctx.n_fake:
            pg = materialize(plan, g)
            z_new = gcn_forward(primary, pg)
            z = smooth(pg, z_new, cfg.alpha, cfg.T, cfg.tol).rows[:g.n]
    return plan


def run_attack(g: GraphBundle, ensemble: SurrogateEnsemble, cfg: AttackConfig) -> InjectionPlan:
    """Label-propagation-based global injection attack on ``g``."""
    return inject(g, ensemble, cfg)


# ------------------------------------------------------------------- auditing

def audit_plan(plan: InjectionPlan, g: GraphBundle, x_prime=None, c_b=None, tol=0.0) -> list:
    """Constraint violations of ``plan`` on ``g`` as human-readable strings.

    ``x_prime`` enables the check that every feature value equals its
    (class, index) table entry; ``c_b`` enables the pseudo-label check.
    """
    problems = []
    want = total_edge_budget(g, len(plan.budgets)) if plan.budgets else 0
    if sum(plan.budgets) != want:
        problems.append(f"edge budgets sum to {sum(plan.budgets)}, expected {want}")
    if plan.delta_x != feature_budget(g):
        problems.append(f"delta_x {plan.delta_x} != {feature_budget(g)}")
    seen = set()
    for f in plan.fake_nodes:
        if len(f.victims) > f.budget:
            problems.append(f"fake {f.fake_id} uses {len(f.victims)} edges over budget {f.budget}")
        if len(f.victims) < f.budget and f.fake_id not in plan.short_clusters:
            problems.append(f"fake {f.fake_id} is short but not flagged")
        for v in f.victims:
            if v in seen:
                problems.append(f"node {v} attacked twice")
            if not 0 <= v < g.n:
                problems.append(f"fake {f.fake_id} wired to non-original node {v}")
            seen.add(v)
            if c_b is not None and c_b[v] != f.pseudo_label:
                problems.append(f"victim {v} of fake {f.fake_id} has target {c_b[v]} != {f.pseudo_label}")
        if len(f.feature) > plan.delta_x:
            problems.append(f"fake {f.fake_id} has {len(f.feature)} nonzeros > delta_x {plan.delta_x}")
        for k, x in f.feature:
            if x == 0:
                problems.append(f"fake {f.fake_id} stores an explicit zero at {k}")
            if abs(x) > g.value_cap + tol:
                problems.append(f"fake {f.fake_id} value {x} at {k} exceeds cap {g.value_cap}")
            if x_prime is not None and abs(x - x_prime[f.pseudo_label, k]) > tol:
                problems.append(f"fake {f.fake_id} value {x} at {k} != table {x_prime[f.pseudo_label, k]}")
    return problems
