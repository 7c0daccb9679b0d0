import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from lpgia.graph import materialize
from lpgia.injector import (
    AttackConfig,
    InjectionPlan,
    aggregated_dist,
    attack_labels,
    audit_plan,
    cluster_score,
    derive_cluster,
    element_values,
    feature_budget,
    generate_feature,
    run_attack,
    sample_budgets,
    total_edge_budget,
)
from lpgia.scoring import NodeScores, group_by_target, score_nodes

from conftest import make_graph, random_graph
from oracles import naive_cluster


# ------------------------------------------------------------------ budgets

def test_budgets_sum_exactly(small_csbm):
    for n_fake in (1, 3, 7, 20):
        for seed in range(5):
            b = sample_budgets(small_csbm, n_fake, seed)
            assert len(b) == n_fake and min(b) >= 1
            assert sum(b) == (n_fake * 2 * small_csbm.m) // small_csbm.n


def test_budgets_regular_graph():
    # 3-regular: the 3-cube
    cube = [(i, i ^ (1 << k)) for i in range(8) for k in range(3) if i < i ^ (1 << k)]
    g = make_graph(cube, 8)
    assert sample_budgets(g, 1, seed=0) == [3]
    assert sample_budgets(g, 4, seed=1) == [3, 3, 3, 3]


def test_budgets_deterministic_and_validated(small_csbm):
    assert sample_budgets(small_csbm, 9, 3) == sample_budgets(small_csbm, 9, 3)
    with pytest.raises(ValueError):
        sample_budgets(small_csbm, 0)
    sparse = make_graph([(0, 1)], 10)
    with pytest.raises(ValueError, match="cannot give"):
        sample_budgets(sparse, 6)


def test_total_budget_integer_floor():
    class G:
        n, m = 2485, 5069
    assert total_edge_budget(G, 5) == 20
    assert total_edge_budget(G, 124) == math.floor(124 * 2 * 5069 / 2485)


# ------------------------------------------------------- cluster aggregation

def test_aggregated_dist_worked_example():
    z = np.array([[0.2, 0.5, 0.3], [0.1, 0.6, 0.3]])
    out = aggregated_dist([0, 1], z, 2, [1, 2])
    assert out == pytest.approx([0.1408, 0.4950, 0.2725], abs=1e-4)
    assert cluster_score(out, 1) == pytest.approx(0.2225, abs=1e-4)


def test_aggregated_dist_singleton_and_linearity(rng):
    z = rng.random((4, 3))
    deg = np.array([1, 2, 3, 4])
    assert aggregated_dist([2], z, 1, deg) == pytest.approx(z[2] / 2.0)
    assert aggregated_dist([0, 3], 2 * z, 5, deg) == pytest.approx(2 * aggregated_dist([0, 3], z, 5, deg))
    with pytest.raises(ValueError):
        aggregated_dist([0, 1, 2], z, 2, deg)
    with pytest.raises(ValueError):
        aggregated_dist([], z, 2, deg)


def test_cluster_score_cases():
    assert cluster_score([0, 1, 0], 1) == 1.0
    assert cluster_score([0.25] * 4, 2) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.data())
def test_cluster_score_sign(z, data):
    c = data.draw(st.integers(0, len(z) - 1))
    z = np.array(z)
    strict = all(z[c] > z[k] for k in range(len(z)) if k != c)
    assert (cluster_score(z, c) > 0) == strict


# ------------------------------------------------------------ greedy cluster

def random_scores(rng, n, L):
    y = rng.integers(L, size=n)
    c_b = (y + rng.integers(1, L, size=n)) % L
    s_h = rng.random(n)
    cand = np.arange(n)
    scores = NodeScores(y=y, c_b=c_b, h=np.zeros(n), s1=np.zeros(n), s2=np.zeros(n), s_h=s_h, beta=0.5,
                        candidates=cand, groups=group_by_target(c_b, cand), zero_degree=np.empty(0, int))
    return scores


@pytest.mark.parametrize("seed", range(40))
def test_derive_cluster_matches_naive(seed):
    rng = np.random.default_rng(seed)
    n, L = int(rng.integers(2, 13)), int(rng.integers(2, 4))
    sc = random_scores(rng, n, L)
    z = rng.random((n, L))
    deg = rng.integers(1, 6, size=n)
    avail = rng.random(n) < 0.85
    avail[rng.integers(n)] = True
    budget, n_k = int(rng.integers(1, n + 2)), int(rng.integers(1, 5))
    got = derive_cluster(sc, z, budget, n_k, deg, avail)
    want = naive_cluster(sc.c_b, sc.s_h, z, deg, sc.candidates, avail, budget, n_k)
    assert (got[0], [int(v) for v in got[1]]) == want


def test_derive_cluster_small_cases(rng):
    sc = random_scores(rng, 8, 2)
    z = rng.random((8, 2))
    deg = np.full(8, 2)
    avail = np.ones(8, bool)
    c_u, members = derive_cluster(sc, z, 1, 10, deg, avail)
    assert members == [int(np.argmax(sc.s_h))]
    # n_k = 1: each step takes the best s_p candidate regardless of s_h
    c_u, members = derive_cluster(sc, z, 4, 1, deg, avail)
    pool = [v for v in range(8) if sc.c_b[v] == c_u and v != members[0]]
    chosen = [members[0]]
    for _ in range(len(members) - 1):
        best = max(pool, key=lambda j: (cluster_score(aggregated_dist(chosen + [j], z, 4, deg), c_u), -j))
        chosen.append(best)
        pool.remove(best)
    assert members == chosen


def test_derive_cluster_scale_invariant(rng):
    sc = random_scores(rng, 12, 3)
    z = rng.random((12, 3))
    deg = rng.integers(1, 5, size=12)
    avail = np.ones(12, bool)
    assert derive_cluster(sc, z, 5, 3, deg, avail) == derive_cluster(sc, 3.5 * z, 5, 3, deg, avail)


def test_derive_cluster_short_when_group_runs_dry(rng):
    sc = random_scores(rng, 6, 3)
    c_u, members = derive_cluster(sc, rng.random((6, 3)), 10, 3, np.ones(6), np.ones(6, bool))
    assert len(members) == int((sc.c_b == c_u).sum())


# ----------------------------------------------------------------- features

def test_feature_budget():
    x = sp.csr_matrix(np.array([[1, 1, 1, 0, 0, 0], [1, 1, 1, 1, 0, 0],
                                [1, 1, 1, 1, 1, 0], [1, 1, 1, 1, 1, 1]], dtype=float))
    g = make_graph([(0, 1), (1, 2), (2, 3)], 4, features=x)
    assert feature_budget(g) == 4
    assert feature_budget(make_graph([(0, 1)], 2)) == 1


def test_element_values():
    x = np.array([[0.2, 1.0], [-0.4, 0.0], [0.0, 0.0], [5.0, 0.0]])
    g = make_graph([(0, 1), (1, 2), (2, 3)], 4, features=x, labels=np.array([0, 0, 0, 1]), n_classes=3)
    xp = element_values(g, g.labels)
    assert xp[0].tolist() == pytest.approx([0.3, 1.0])
    assert xp[1].tolist() == [5.0, 0.0]
    assert xp[2].tolist() == [0.0, 0.0]
    # over-cap statistics are unusable rather than clipped
    assert element_values(g, g.labels, cap=2.0)[1].tolist() == [0.0, 0.0]
    assert element_values(g, g.labels, cap=2.0)[0].tolist() == pytest.approx([0.3, 1.0])


def test_element_values_binary(small_csbm):
    x = small_csbm.features.copy()
    x.data[:] = 1.0
    g = make_graph(np.argwhere(np.triu(small_csbm.adjacency.toarray())), small_csbm.n, features=x,
                   labels=small_csbm.labels)
    xp = element_values(g, g.labels)
    assert set(np.unique(xp)) <= {0.0, 1.0}


def test_attack_labels_use_train_truth(small_csbm, small_ensemble):
    y = attack_labels(small_csbm, small_ensemble.Z0)
    train = small_csbm.mask("train")
    assert np.array_equal(y[train], small_csbm.labels[train])
    assert np.array_equal(y[~train], small_ensemble.Z0.argmax()[~train])


def test_feature_scoring_by_hand():
    W = np.array([[0.5, 0.2], [0.1, 0.4]])
    xp = np.array([[0.3, 0.3], [0.7, 0.7]])
    z = np.array([[0.6, 0.4]])
    feat = generate_feature(0, [0], z, W, xp, 2, 0, [1])
    # s_x = [(0.5 - 0.2) * 0.3, (0.1 - 0.4) * 0.3] -> only index 0 is positive
    assert feat == [(0, 0.3)]


def test_feature_equal_columns_is_empty():
    W = np.ones((5, 3))
    assert generate_feature(1, [0], np.array([[0.2, 0.5, 0.3]]), W, np.ones((3, 5)), 2, 0, [2]) == []


def test_feature_budget_rule():
    # dim 5, delta_x 2, positive scores at four indices -> 2 draws from the top 4
    W = np.zeros((5, 2))
    W[:4, 0] = [0.4, 0.3, 0.2, 0.1]
    W[4, 1] = 1.0
    xp = np.ones((2, 5))
    seen = set()
    for seed in range(40):
        feat = generate_feature(0, [0], np.array([[0.5, 0.5]]), W, xp, 2, seed, [1])
        assert len(feat) == 2
        idx = {k for k, _ in feat}
        assert idx <= {0, 1, 2, 3}
        seen |= idx
    assert seen == {0, 1, 2, 3}
    assert generate_feature(0, [0], np.array([[0.5, 0.5]]), W, xp, 2, 7, [1]) == \
        generate_feature(0, [0], np.array([[0.5, 0.5]]), W, xp, 2, 7, [1])


def test_feature_competing_label_from_cluster():
    # c_z is the runner-up of the degree-weighted cluster sum, so it depends on the whole cluster
    z = np.array([[0.1, 0.8, 0.1], [0.7, 0.0, 0.3], [0.0, 0.0, 1.0]])
    W = np.array([[1.0, 0.55, 0.0], [0.0, 0.55, 1.0], [0.5, 0.55, 0.6]])
    xp = np.ones((3, 3))
    # {0, 1}: sums [0.8, 0.8, 0.4] -> c_z = 0, s_x = [-0.45, 0.55, 0.05]
    assert generate_feature(1, [0, 1], z, W, xp, 3, 0, [1, 1, 1]) == [(1, 1.0), (2, 1.0)]
    # {0, 2}: sums [0.1, 0.8, 1.1] -> c_z = 2, s_x = [0.55, -0.45, -0.05]
    assert generate_feature(1, [0, 2], z, W, xp, 3, 0, [1, 1, 1]) == [(0, 1.0)]


# ---------------------------------------------------------------- full attack

@pytest.fixture(scope="module")
def plan(small_csbm, small_ensemble):
    return run_attack(small_csbm, small_ensemble, AttackConfig(ratio=0.05, R=3, seed=1))


def test_attack_invariants(plan, small_csbm, small_ensemble):
    g = small_csbm
    assert plan.n_fake == round(0.05 * g.n)
    assert sum(plan.budgets) == total_edge_budget(g, plan.n_fake)
    labels = attack_labels(g, small_ensemble.Z0)
    cfg = AttackConfig(ratio=0.05, R=3, seed=1)
    from lpgia.propagation import smooth
    sc = score_nodes(g, small_ensemble.Z0, smooth(g, small_ensemble.Z0, cfg.alpha))
    assert audit_plan(plan, g, element_values(g, labels, cap=g.value_cap), sc.c_b) == []
    victims = plan.victims()
    assert len(victims) == len(set(victims))
    assert not g.mask("train")[victims].any()
    for f in plan.fake_nodes:
        assert len(f.victims) == f.budget or f.fake_id in plan.short_clusters
        assert 0 < len(f.feature) <= plan.delta_x


def test_attack_is_deterministic(plan, small_csbm, small_ensemble):
    again = run_attack(small_csbm, small_ensemble, AttackConfig(ratio=0.05, R=3, seed=1))
    assert again.to_json() == plan.to_json()
    other = run_attack(small_csbm, small_ensemble, AttackConfig(ratio=0.05, R=3, seed=2))
    assert other.to_json() != plan.to_json()


def test_plan_json_round_trip(plan, tmp_path):
    path = plan.save(tmp_path / "plan.json")
    back = InjectionPlan.load(path)
    assert back.to_json() == plan.to_json()
    doc = json.loads(path.read_text())
    assert doc["audit"]["total_edges"] == plan.total_edges
    assert set(doc["fake_nodes"][0]) == {"fake_id", "budget", "pseudo_label", "victims", "feature"}
    doc["format"] = "other"
    with pytest.raises(ValueError):
        InjectionPlan.from_dict(doc)


def test_zero_fakes_is_identity(small_csbm, small_ensemble):
    plan = run_attack(small_csbm, small_ensemble, AttackConfig(n_fake=0, R=3))
    assert plan.n_fake == 0 and plan.budgets == []
    pg = materialize(plan, small_csbm)
    assert (pg.adjacency != small_csbm.adjacency).nnz == 0


def test_without_resmoothing_still_valid(small_csbm, small_ensemble):
    plan = run_attack(small_csbm, small_ensemble, AttackConfig(n_fake=4, R=3, recompute_smooth=False))
    assert audit_plan(plan, small_csbm) == []


def test_pool_exhaustion_returns_partial_plan(small_ensemble, rng):
    from lpgia.surrogate import build_ensemble
    g = random_graph(rng, 12, p=0.5, L=2, dim=6)
    ens = build_ensemble(g, R=1)
    plan = run_attack(g, ens, AttackConfig(n_fake=12, R=1, victim_pool="all"))
    assert plan.n_fake < 12
    assert plan.warnings and "exhausted" in plan.warnings[0]
    assert audit_plan(plan, g) == []


def test_config_validation():
    for bad in (dict(n_k=0), dict(alpha=1.0), dict(beta=1.2), dict(R=0), dict(victim_pool="x"),
                dict(n_fake=-1), dict(ratio=-0.1)):
        with pytest.raises(ValueError):
            AttackConfig(**bad)
    assert AttackConfig(ratio=0.05).resolve_n_fake(297) == 15
    with pytest.raises(ValueError):
        AttackConfig().resolve_n_fake(100)


def test_audit_catches_violations(plan, small_csbm):
    bad = InjectionPlan.from_dict(plan.to_dict())
    bad.budgets[0] += 1
    bad.fake_nodes[0].victims.append(bad.fake_nodes[1].victims[0])
    bad.fake_nodes[1].feature = [(k, 99.0) for k in range(plan.delta_x + 1)]
    problems = "\n".join(audit_plan(bad, small_csbm))
    assert "budgets sum" in problems
    assert "attacked twice" in problems
    assert "over budget" in problems
    assert "nonzeros" in problems and "exceeds cap" in problems
