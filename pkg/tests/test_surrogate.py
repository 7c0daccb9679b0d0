import numpy as np
import pytest

from lpgia.graph import gen_csbm
from lpgia.surrogate import (
    GcnParams,
    TrainingError,
    build_ensemble,
    gcn_forward,
    gcn_norm,
    load_params,
    loss_and_grad,
    prepare,
    save_params,
    train,
)

from conftest import make_graph, random_graph


def softmax(a):
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def fd_check(g, variant, rng, eps=1e-5):
    prep = prepare(g)
    w1 = rng.normal(size=(g.dim, 4))
    w2 = rng.normal(size=(4, g.n_classes))
    mask = np.ones(g.n, dtype=bool)
    _, g1, g2 = loss_and_grad(w1, w2, variant, prep, g.labels, mask, 5e-4)
    worst = 0.0
    for w, grad in ((w1, g1), (w2, g2)):
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + eps
            lp = loss_and_grad(w1, w2, variant, prep, g.labels, mask, 5e-4)[0]
            w[idx] = old - eps
            lm = loss_and_grad(w1, w2, variant, prep, g.labels, mask, 5e-4)[0]
            w[idx] = old
            num = (lp - lm) / (2 * eps)
            worst = max(worst, abs(num - grad[idx]) / max(abs(num), abs(grad[idx]), 1e-6))
    return worst


@pytest.mark.parametrize("variant", ["gcn", "sgc"])
@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(variant, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, p=0.4, L=2, dim=5, density=0.8)
    assert fd_check(g, variant, rng) <= 1e-4


def test_loss_value_by_hand():
    g = make_graph([(0, 1)], 2, labels=np.array([0, 1]), n_classes=2)
    prep = prepare(g)
    w1 = np.array([[1.0], [-1.0]])
    w2 = np.array([[1.0, 0.0]])
    loss, _, _ = loss_and_grad(w1, w2, "sgc", prep, g.labels, np.ones(2, bool), 0.0)
    a = gcn_norm(g.adjacency).toarray()
    logits = a @ a @ np.eye(2) @ w1 @ w2
    p = softmax(logits)
    assert loss == pytest.approx(-np.log(p[0, 0]) - np.log(p[1, 1]), rel=1e-12)


def test_forward_rows_sum_to_one(rng):
    g = random_graph(rng, 15)
    params = GcnParams(rng.normal(size=(8, 16)), rng.normal(size=(16, 3)))
    z = gcn_forward(params, g)
    assert z.kind == "raw_softmax"
    assert np.allclose(z.rows.sum(axis=1), 1.0, atol=1e-9)


def test_zero_weights_give_uniform(rng):
    g = random_graph(rng, 6)
    z = gcn_forward(GcnParams(np.zeros((8, 4)), np.zeros((4, 3))), g)
    assert np.allclose(z.rows, 1 / 3)


def test_isolated_node_uses_own_feature():
    x = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]])
    g = make_graph([(0, 1)], 3, features=x)
    rng = np.random.default_rng(1)
    w1, w2 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    z = gcn_forward(GcnParams(w1, w2), g).rows
    assert z[2] == pytest.approx(softmax(np.maximum(x[2:] @ w1, 0) @ w2)[0], abs=1e-12)


def test_sgc_equals_linearized(rng):
    g = random_graph(rng, 12)
    params = GcnParams(rng.normal(size=(8, 16)), rng.normal(size=(16, 3)), "sgc")
    a = gcn_norm(g.adjacency).toarray()
    want = softmax(a @ a @ g.features.toarray() @ params.linearized())
    assert np.max(np.abs(gcn_forward(params, g).rows - want)) < 1e-10


def test_params_validation():
    with pytest.raises(ValueError):
        GcnParams(np.zeros((3, 4)), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        GcnParams(np.full((3, 4), np.nan), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        GcnParams(np.zeros((3, 4)), np.zeros((4, 2)), "gat")


def test_separable_graph_fits_train_set():
    g = gen_csbm(100, 2, 20, 0.2, 0.01, 4.0, seed=0)
    params = train(g, seed=0)
    pred = gcn_forward(params, g).argmax()
    assert np.mean(pred[g.mask("train")] == g.labels[g.mask("train")]) == 1.0
    assert np.mean(pred[g.mask("test")] == g.labels[g.mask("test")]) > 0.5 + 0.3


@pytest.mark.parametrize("variant", ["gcn", "sgc"])
def test_test_accuracy_above_chance(csbm, variant):
    params = train(csbm, variant=variant, seed=1)
    pred = gcn_forward(params, csbm).argmax()
    test = csbm.mask("test")
    assert np.mean(pred[test] == csbm.labels[test]) > 1 / 3 + 0.3


def test_training_is_deterministic(small_csbm):
    a = train(small_csbm, seed=4)
    b = train(small_csbm, seed=4)
    c = train(small_csbm, seed=5)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_empty_train_split_rejected():
    g = make_graph([(0, 1)], 2, split=np.array([2, 2], dtype=np.int8))
    with pytest.raises(ValueError, match="train"):
        train(g)


def test_divergence_reports_seed_and_lr(small_csbm):
    with pytest.raises(TrainingError, match=r"seed=3.*lr=1e\+30"):
        train(small_csbm, seed=3, lr=1e30)


def test_ensemble_of_one(small_csbm):
    ens = build_ensemble(small_csbm, R=1, seed=2)
    m = ens.primary
    assert np.array_equal(ens.W_bar, m.W1 @ m.W2)
    assert ens.W_bar.shape == (small_csbm.dim, small_csbm.n_classes)
    assert np.array_equal(ens.Z0.rows, gcn_forward(m, small_csbm).rows)


def test_ensemble_mean_and_thread_independence(small_csbm, monkeypatch):
    ens = build_ensemble(small_csbm, R=4, seed=9)
    assert len({m.digest() for m in ens.members}) == 4
    assert np.allclose(ens.W_bar, np.mean([m.W1 @ m.W2 for m in ens.members], axis=0), atol=1e-15)
    monkeypatch.setenv("LPGIA_THREADS", "1")
    serial = build_ensemble(small_csbm, R=4, seed=9)
    assert np.array_equal(serial.W_bar, ens.W_bar)
    with pytest.raises(ValueError):
        build_ensemble(small_csbm, R=0)


def test_checkpoint_round_trip(tmp_path, rng):
    p = GcnParams(rng.normal(size=(5, 3)), rng.normal(size=(3, 2)), "sgc")
    path = save_params(p, tmp_path / "w.txt")
    q = load_params(path)
    assert q.variant == "sgc" and q.digest() == p.digest()
    assert path.read_text().splitlines()[1] == "sgc 5 3 2"
    (tmp_path / "bad.txt").write_text("nope\n")
    with pytest.raises(ValueError):
        load_params(tmp_path / "bad.txt")
