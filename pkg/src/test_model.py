# src/test_model.py
"""
test_model.py
MLP forward/backward, local training and evaluation.

Usage:
    python -m pytest src/test_model.py
"""

import numpy as np
import pytest

from src.data import LabeledDataset, synth_blobs
from src.errors import ConfigError, DatasetError, ShapeMismatchError
from src.model import (
    ModelSpec,
    TrainConfig,
    evaluate,
    init_params,
    loss_and_gradient,
    mean_loss,
    predict_proba,
    train_local,
)
from src.params import ParameterSet


def test_init_layout_and_bounds():
    spec = ModelSpec(input_dim=5, hidden_dims=(7, 3), num_classes=4)
    p = init_params(spec, seed=0)
    assert p.names == (
        "dense_0.weight", "dense_0.bias",
        "dense_1.weight", "dense_1.bias",
        "dense_2.weight", "dense_2.bias",
    )
    assert p.shapes == ((5, 7), (7,), (7, 3), (3,), (3, 4), (4,))
    assert np.all(np.abs(p["dense_0.weight"]) <= np.sqrt(6.0 / 12))
    assert not np.any(p["dense_1.bias"])
    assert init_params(spec, seed=0).bit_equal(p)
    assert not init_params(spec, seed=1).bit_equal(p)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        ModelSpec(input_dim=3, num_classes=1)


def _finite_difference(params, x, y, mu, anchor, eps=1e-5):
    grads = []
    for name, arr in params.layers:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            def shifted(delta):
                layers = []
                for n, a in params.layers:
                    a = a.copy()
                    if n == name:
                        a[idx] += delta
                    layers.append((n, a))
                return loss_and_gradient(ParameterSet(tuple(layers)), x, y, mu, anchor)[0]

            g[idx] = (shifted(eps) - shifted(-eps)) / (2 * eps)
        grads.append(g)
    return grads


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(50):
        spec = ModelSpec(input_dim=3, hidden_dims=(4,), num_classes=3)
        params = init_params(spec, seed=trial)
        x = rng.normal(size=(6, 3))
        y = rng.integers(0, 3, size=6)
        mu = 0.0 if trial % 2 == 0 else 0.3
        anchor = init_params(spec, seed=1000 + trial) if mu else None
        _, grad = loss_and_gradient(params, x, y, mu, anchor)
        numeric = _finite_difference(params, x, y, mu, anchor)
        analytic = grad.flatten()
        approx = np.concatenate([g.reshape(-1) for g in numeric])
        mask = np.abs(analytic) > 1e-8
        rel = np.abs(analytic[mask] - approx[mask]) / (np.abs(analytic[mask]) + np.abs(approx[mask]))
        assert np.all(rel < 1e-4), (trial, float(rel.max()))


def test_proximal_term_adds_to_loss():
    spec = ModelSpec(input_dim=2, hidden_dims=(3,), num_classes=2)
    p = init_params(spec, 0)
    anchor = p.map(lambda a: a + 1.0)
    x = np.ones((2, 2))
    y = np.array([0, 1])
    plain, _ = loss_and_gradient(p, x, y)
    prox, _ = loss_and_gradient(p, x, y, proximal_mu=0.5, anchor=anchor)
    assert prox == pytest.approx(plain + 0.25 * p.num_parameters)
    with pytest.raises(ValueError):
        loss_and_gradient(p, x, y, proximal_mu=0.5)


def test_proximal_term_vanishes_at_anchor():
    spec = ModelSpec(input_dim=3, hidden_dims=(4,), num_classes=3)
    p = init_params(spec, 1)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 3))
    y = np.array([0, 1, 2, 1, 0])
    plain_loss, plain_grad = loss_and_gradient(p, x, y)
    prox_loss, prox_grad = loss_and_gradient(p, x, y, proximal_mu=0.7, anchor=p)
    assert prox_loss == plain_loss
    np.testing.assert_array_equal(prox_grad.flatten(), plain_grad.flatten())


def test_zero_weights_on_balanced_classes_give_ln2():
    spec = ModelSpec(input_dim=3, hidden_dims=(4,), num_classes=2)
    zero = init_params(spec, 0).map(np.zeros_like)
    x = np.random.default_rng(2).normal(size=(6, 3))
    loss, _ = loss_and_gradient(zero, x, np.array([0, 1, 0, 1, 0, 1]))
    assert abs(loss - np.log(2.0)) < 1e-12


def test_batch_shape_errors():
    spec = ModelSpec(input_dim=2, hidden_dims=(3,), num_classes=2)
    p = init_params(spec, 0)
    with pytest.raises(ShapeMismatchError):
        predict_proba(p, np.ones((2, 3)))
    with pytest.raises(DatasetError):
        loss_and_gradient(p, np.ones((1, 2)), np.array([5]))


def test_probabilities_sum_to_one():
    spec = ModelSpec(input_dim=4, hidden_dims=(5,), num_classes=3)
    proba = predict_proba(init_params(spec, 2), np.random.default_rng(0).normal(size=(10, 4)))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, rtol=1e-12)


def test_zero_epochs_returns_input():
    ds = synth_blobs(3, 4, 5, 1.0, seed=0)
    p = init_params(ModelSpec(4, (6,), 3), 0)
    assert train_local(p, ds, TrainConfig(epochs=0)) is p


def test_zero_learning_rate_keeps_params():
    ds = synth_blobs(3, 4, 5, 1.0, seed=0)
    p = init_params(ModelSpec(4, (6,), 3), 0)
    out = train_local(p, ds, TrainConfig(epochs=2, learning_rate=0.0, optimizer="sgd"))
    assert out.bit_equal(p)


def test_full_batch_sgd_epoch_is_one_gradient_step():
    ds = synth_blobs(3, 4, 5, 1.0, seed=7)
    p = init_params(ModelSpec(4, (6,), 3), 3)
    lr = 0.1
    _, grad = loss_and_gradient(p, ds.features, ds.labels)
    stepped = train_local(p, ds, TrainConfig(epochs=1, batch_size=len(ds), learning_rate=lr, optimizer="sgd", seed=5))
    np.testing.assert_allclose(stepped.flatten(), p.flatten() - lr * grad.flatten(), rtol=1e-12, atol=1e-14)


def test_training_is_seed_deterministic_and_pure():
    ds = synth_blobs(4, 6, 20, 1.0, seed=3)
    p = init_params(ModelSpec(6, (8,), 4), 0)
    before = p.flatten().copy()
    a = train_local(p, ds, TrainConfig(epochs=3, batch_size=7, seed=11))
    b = train_local(p, ds, TrainConfig(epochs=3, batch_size=7, seed=11))
    c = train_local(p, ds, TrainConfig(epochs=3, batch_size=7, seed=12))
    assert a.bit_equal(b)
    assert not a.bit_equal(c)
    np.testing.assert_array_equal(p.flatten(), before)


@pytest.mark.parametrize("optimizer,lr", [("sgd", 0.005), ("adam", 0.01)])
def test_training_reduces_loss(optimizer, lr):
    ds = synth_blobs(4, 6, 30, 1.0, seed=4)
    p = init_params(ModelSpec(6, (16,), 4), 0)
    trained = train_local(p, ds, TrainConfig(epochs=20, batch_size=16, learning_rate=lr, optimizer=optimizer))
    assert mean_loss(trained, ds) < mean_loss(p, ds)


def test_separable_blobs_reach_full_accuracy():
    ds = synth_blobs(4, 8, 10, 1e-3, seed=5)
    p = init_params(ModelSpec(8, (16,), 4), 0)
    trained = train_local(p, ds, TrainConfig(epochs=200, batch_size=8, learning_rate=0.01, optimizer="adam"))
    assert evaluate(trained, ds).accuracy == 1.0


def test_evaluate_reports_all_classes():
    ds = synth_blobs(3, 4, 10, 1.0, seed=6)
    rep = evaluate(init_params(ModelSpec(4, (5,), 3), 0), ds)
    assert len(rep.precision) == len(rep.recall) == len(rep.f1) == 3
    assert 0.0 <= rep.accuracy <= 1.0
    assert 0.0 <= rep.auc_micro_ovr <= 1.0
    assert rep.sample_count == 30
    assert rep.loss == pytest.approx(mean_loss(init_params(ModelSpec(4, (5,), 3), 0), ds))


def test_evaluate_rejects_empty_dataset():
    empty = LabeledDataset(np.zeros((0, 4)), np.zeros(0, dtype=np.int64), 3)
    with pytest.raises(DatasetError):
        evaluate(init_params(ModelSpec(4, (5,), 3), 0), empty)


def test_evaluate_ignores_row_order():
    ds = synth_blobs(3, 4, 12, 1.5, seed=8)
    p = init_params(ModelSpec(4, (5,), 3), 4)
    perm = np.random.default_rng(8).permutation(len(ds))
    shuffled = LabeledDataset(ds.features[perm], ds.labels[perm], ds.num_classes)
    a, b = evaluate(p, ds), evaluate(p, shuffled)
    assert a.correct == b.correct and a.accuracy == b.accuracy
    assert a.precision == b.precision and a.recall == b.recall and a.f1 == b.f1
    assert b.loss == pytest.approx(a.loss, rel=1e-12)
    assert b.auc_micro_ovr == pytest.approx(a.auc_micro_ovr, rel=1e-12)
