import numpy as np
import pytest

from graphon_pooling.gnn import (
    Adam,
    DiffusionDataset,
    GnnConfig,
    TrainHyper,
    TrainingError,
    evaluate,
    gnn_forward,
    init_weights,
    make_diffusion_dataset,
    mse_grad,
    mse_loss,
    split_dataset,
    train,
)
from graphon_pooling.graphon import exponential
from graphon_pooling.io import load_weights, save_weights
from graphon_pooling.pooling import build_pooling_plan

from helpers import gradient_errors, tiny_model


def test_zero_weights_give_bias():
    cfg, w = tiny_model()
    w = {k: np.zeros_like(v) for k, v in w.items()}
    w["readout_b"] = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(gnn_forward(cfg, w, np.arange(6.0)), w["readout_b"])


def test_identity_filter_path():
    n0, n1 = 6, 3
    plan = build_pooling_plan(exponential(), "m1", [n0, n1])
    cfg = GnnConfig.from_plan(plan, [1], [3], n_classes=n1)
    w = init_weights(cfg)
    w["h0"] = np.zeros((1, 1, 3))
    w["h0"][0, 0, 0] = 1.0
    w["b0"] = np.zeros(1)
    w["readout_w"] = np.eye(n1)
    w["readout_b"] = np.zeros(n1)
    x = np.random.default_rng(0).standard_normal(n0)
    np.testing.assert_allclose(gnn_forward(cfg, w, x), plan.transfer_matrix(0) @ np.maximum(x, 0), atol=1e-15)


def test_forward_finite():
    plan = build_pooling_plan(exponential(), "m3", [20, 10, 5], seed=1)
    cfg = GnnConfig.from_plan(plan, [4, 4], [3, 3], n_classes=4)
    rng = np.random.default_rng(1)
    for i in range(100):
        w = init_weights(cfg, seed=i)
        assert np.all(np.isfinite(gnn_forward(cfg, w, rng.standard_normal((3, 20)))))


def test_forward_dimension_mismatch():
    cfg, w = tiny_model()
    with pytest.raises(ValueError):
        gnn_forward(cfg, w, np.zeros(7))


def test_pooling_map_linearity():
    cfg, _ = tiny_model()
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, 6))
    p = cfg.pools[0]
    np.testing.assert_allclose(p @ (a + b), p @ a + p @ b, atol=1e-15)


def test_filter_stage_permutation_equivariance():
    rng = np.random.default_rng(3)
    s = rng.random((6, 6))
    s = (s + s.T) / 2
    perm = rng.permutation(6)
    pm = np.eye(6)[perm]
    h = rng.standard_normal(3)
    x = rng.standard_normal(6)

    def filt(shift, v):
        return sum(c * np.linalg.matrix_power(shift, k) @ v for k, c in enumerate(h))

    np.testing.assert_allclose(filt(pm @ s @ pm.T, pm @ x), pm @ filt(s, x), atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check(seed):
    cfg, w = tiny_model(seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 6))
    errs = gradient_errors(cfg, w, x, rng.integers(0, 3, 4))
    assert max(errs.values()) <= 1e-4, errs


def test_gradient_check_three_layers():
    plan = build_pooling_plan(exponential(), "m2", [8, 5, 3], seed=4)
    cfg = GnnConfig.from_plan(plan, [2, 3], [3, 2], n_classes=2, seed=4)
    cfg.fit_input_standardization(np.arange(8.0))
    rng = np.random.default_rng(4)
    errs = gradient_errors(cfg, init_weights(cfg, 4), rng.standard_normal((3, 8)), rng.integers(0, 2, 3))
    assert max(errs.values()) <= 1e-4, errs


def test_adam_zero_gradient():
    params = {"a": np.array([1.0, -2.0])}
    Adam(lr=0.1).step(params, {"a": np.zeros(2)})
    np.testing.assert_array_equal(params["a"], [1.0, -2.0])


def test_adam_first_step_size():
    params = {"a": np.array([1.0])}
    Adam(lr=0.01).step(params, {"a": np.array([5.0])})
    # bias correction makes the first step lr * sign(g)
    assert params["a"][0] == pytest.approx(0.99, abs=1e-8)


def test_hyper_validation():
    with pytest.raises(ValueError):
        TrainHyper(beta1=1.0)


def test_mse():
    assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0
    assert mse_loss([0.0], [2.0]) == 4
    with pytest.raises(ValueError):
        mse_loss([1.0], [1.0, 2.0])
    rng = np.random.default_rng(5)
    p, t = rng.standard_normal(5), rng.standard_normal(5)
    g = mse_grad(p, t)
    np.testing.assert_allclose(g, 2 * (p - t) / 5)
    h = 1e-6
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        assert (mse_loss(p + e, t) - mse_loss(p - e, t)) / (2 * h) == pytest.approx(g[i], rel=1e-6)


def test_diffusion_dataset():
    a = build_pooling_plan(exponential(), "m1", [30]).layers[0].adjacency
    d = make_diffusion_dataset(a, 200, n_classes=5, t_max=4, seed=3)
    s = a / np.max(np.abs(np.linalg.eigvalsh(a)))
    for i in np.flatnonzero(d.times == 1)[:5]:
        np.testing.assert_allclose(d.x[i], s[:, d.sources[d.labels[i]]], atol=1e-15)
    for i in range(10):
        e = np.zeros(30)
        e[d.sources[d.labels[i]]] = 1
        np.testing.assert_allclose(d.x[i], np.linalg.matrix_power(s, d.times[i]) @ e, atol=1e-12)
    d2 = make_diffusion_dataset(a, 200, n_classes=5, t_max=4, seed=3)
    assert np.array_equal(d.x, d2.x) and np.array_equal(d.labels, d2.labels)
    assert len(set(d.sources)) == 5 and set(d.times) <= set(range(1, 5))
    with pytest.raises(ValueError):
        make_diffusion_dataset(a, 10, n_classes=31)


def test_diffusion_dataset_full_size():
    a = build_pooling_plan(exponential(), "m1", [100]).layers[0].adjacency
    d = make_diffusion_dataset(a, 1000, n_classes=10, seed=0)
    assert len(d) == 1000
    counts = np.bincount(d.labels, minlength=10)
    assert counts.min() > 60 and counts.max() < 140


def _toy_separable(n=60, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    x = rng.normal(0, 0.3, (n, 10))
    x[:, :5] += np.where(labels[:, None] == 0, 1.0, -1.0)
    return DiffusionDataset(x, labels, np.arange(2), np.ones(n, dtype=int))


def test_loss_decreases_on_toy_problem():
    plan = build_pooling_plan(exponential(), "m1", [10, 5])
    cfg = GnnConfig.from_plan(plan, [4], [2], n_classes=2)
    res = train(cfg, _toy_separable(), TrainHyper(lr=5e-3, epochs=10, batch_size=10))
    losses = [r["train_loss"] for r in res.history]
    assert losses[-1] < losses[0]
    assert len(res.history) == 10


def test_evaluate():
    plan = build_pooling_plan(exponential(), "m1", [10, 5])
    cfg = GnnConfig.from_plan(plan, [1], [1], n_classes=10)
    w = {k: np.zeros_like(v) for k, v in init_weights(cfg).items()}
    labels = np.repeat(np.arange(10), 10)
    data = DiffusionDataset(np.zeros((100, 10)), labels, np.arange(10), np.ones(100, dtype=int))
    assert evaluate(cfg, w, data) == pytest.approx(0.9)
    w["readout_b"][3] = 1.0
    perfect = data.subset(np.flatnonzero(labels == 3))
    assert evaluate(cfg, w, perfect) == 0.0
    with pytest.raises(ValueError):
        evaluate(cfg, w, data.subset([]))


def test_training_determinism_and_divergence():
    plan = build_pooling_plan(exponential(), "m1", [10, 5])
    cfg = GnnConfig.from_plan(plan, [3], [2], n_classes=2)
    tr, va = split_dataset(_toy_separable(80, 1), [60, 20])
    h = TrainHyper(lr=1e-2, epochs=5, batch_size=8, seed=4)
    r1, r2 = train(cfg, tr, h, va), train(cfg, tr, h, va)
    assert r1.metrics_jsonl() == r2.metrics_jsonl()
    for k in r1.weights:
        assert np.array_equal(r1.weights[k], r2.weights[k])
    bad = DiffusionDataset(np.full((4, 10), np.inf), np.zeros(4, dtype=int), np.arange(2), np.ones(4, dtype=int))
    with pytest.raises(TrainingError) as err, np.errstate(invalid="ignore", over="ignore"):
        train(cfg, bad, TrainHyper(epochs=2))
    assert err.value.epoch == 1


def test_weights_roundtrip(tmp_path):
    cfg, w = tiny_model()
    save_weights(tmp_path / "w", w)
    raw = (tmp_path / "w.bin").read_bytes()
    assert len(raw) == 8 * sum(v.size for v in w.values())
    back = load_weights(tmp_path / "w.json")
    for k in w:
        assert np.array_equal(back[k], w[k])
