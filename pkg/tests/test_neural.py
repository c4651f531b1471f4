import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icsids.errors import DimensionMismatch, InvalidWeights, NonFiniteLoss, ShapeMismatch, StaleCache, UnsupportedVersion
from icsids.neural import (
    BCE,
    IDENTITY,
    MSE,
    AdamState,
    DenseLayer,
    MlpModel,
    adam_step,
    backward,
    bce_loss,
    build_mlp,
    build_sae,
    encode,
    forward,
    glorot_limit,
    grad_check,
    mlp_from_dict,
    mlp_to_dict,
    predict,
    reconstruction_excess,
    reconstruction_loss,
    sae_from_dict,
    sae_to_dict,
    train_autoencoder,
    train_mlp,
    weighted_bce,
    weighted_bce_loss,
)
from oracles import gradcheck_instance


def test_glorot_bounds():
    rng = np.random.default_rng(0)
    m = build_mlp([17, 32, 16, 1], rng)
    for layer in m.layers:
        assert np.abs(layer.W).max() <= glorot_limit(layer.n_in, layer.n_out)
        assert not layer.b.any()
    assert m.dims == [17, 32, 16, 1]


def test_forward_shapes_and_range():
    m = build_mlp([5, 8, 1], np.random.default_rng(1))
    out, _ = forward(m, np.random.default_rng(2).random((7, 5)))
    assert out.shape == (7, 1) and ((out > 0) & (out < 1)).all()
    with pytest.raises(DimensionMismatch):
        forward(m, np.zeros((3, 4)))


def test_inference_is_deterministic():
    m = build_mlp([4, 6, 1], np.random.default_rng(0), dropout_rate=0.5)
    X = np.random.default_rng(1).random((10, 4))
    assert np.array_equal(predict(m, X), predict(m, X))


def test_dropout_preserves_expectation():
    m = build_mlp([3, 50, 1], np.random.default_rng(0), dropout_rate=0.2)
    X = np.random.default_rng(1).random((4, 3))
    _, clean = forward(m, X)
    rng = np.random.default_rng(2)
    acc = np.zeros_like(clean.post[0])
    draws = 4000
    for _ in range(draws):
        acc += forward(m, X, training=True, rng=rng)[1].post[0]
    # each unit is h/0.8 with prob 0.8 and 0 otherwise: sd of the mean is h/(2 sqrt(draws))
    tol = 5 * clean.post[0] / (2 * math.sqrt(draws)) + 1e-12
    assert np.all(np.abs(acc / draws - clean.post[0]) <= tol)


def test_stale_cache_rejected():
    m = build_mlp([2, 3, 1], np.random.default_rng(0))
    out, cache = forward(m, np.ones((2, 2)))
    m.touch()
    with pytest.raises(StaleCache):
        backward(m, cache, np.ones_like(out))
    other = m.copy()
    with pytest.raises(StaleCache):
        backward(other, forward(m, np.ones((2, 2)))[1], np.ones_like(out))


def test_relu_negative_unit_passes_no_gradient():
    layer1 = DenseLayer(np.array([[1.0], [-1.0]]), np.zeros(2))
    layer2 = DenseLayer(np.array([[1.0, 1.0]]), np.zeros(1), IDENTITY)
    m = MlpModel([layer1, layer2])
    out, cache = forward(m, np.array([[2.0]]))
    g = backward(m, cache, np.ones_like(out))
    assert g[0][1, 0] == 0.0 and g[0][0, 0] == 2.0


def test_bce_hand_values():
    assert bce_loss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2), abs=1e-4)
    assert bce_loss([0.25], [1]) == pytest.approx(1.3863, abs=1e-4)
    assert bce_loss([1.0, 0.0], [1, 0]) == pytest.approx(-math.log(1 - 1e-7), abs=1e-9)
    assert math.isfinite(bce_loss([0.0], [1]))


def test_weighted_bce_hand_values():
    assert weighted_bce_loss([0.5], [1], 2.0, 1.0) == pytest.approx(2 * math.log(2), abs=1e-4)
    assert weighted_bce_loss([0.3, 0.8], [1, 0], 1.0, 1.0) == pytest.approx(bce_loss([0.3, 0.8], [1, 0]))
    with pytest.raises(InvalidWeights):
        weighted_bce_loss([0.5], [1], 0.5, 1.0)
    with pytest.raises(InvalidWeights):
        weighted_bce(1.0, 0.0)


@settings(max_examples=60)
@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=20), st.data(), st.floats(1.0, 5.0))
def test_bce_non_negative_and_weights_scale_attack_terms(ps, data, w_s):
    ts = data.draw(st.lists(st.integers(0, 1), min_size=len(ps), max_size=len(ps)))
    base = bce_loss(ps, ts)
    assert base >= 0.0
    attack_part = weighted_bce_loss(ps, ts, w_s, 1.0) - base
    pos = [(p, t) for p, t in zip(ps, ts) if t == 1]
    expected = (w_s - 1) * -sum(math.log(p) for p, _ in pos) / len(ps)
    assert attack_part == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("loss", [BCE, weighted_bce(2.0, 1.0), MSE], ids=["bce", "wbce", "mse"])
def test_grad_check_random_nets(seed, loss):
    model, X, y, kink = gradcheck_instance(seed)
    assert kink > 1e-4
    assert grad_check(model, loss, X, y) < 1e-4


def test_grad_check_linear_identity_net():
    rng = np.random.default_rng(3)
    m = build_mlp([4, 3, 2], rng, hidden=IDENTITY, output=IDENTITY)
    X, y = rng.normal(size=(6, 4)), rng.normal(size=(6, 2))
    assert grad_check(m, MSE, X, y) < 1e-7


def test_adam_first_step_hand_value():
    p = [np.array([0.0])]
    st_ = AdamState.zeros_like(p)
    adam_step(p, [np.array([1.0])], st_)
    assert st_.t == 1
    assert p[0][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-15)


def test_adam_zero_grad_and_bounded_steps():
    p = [np.array([1.5, -2.0])]
    st_ = AdamState.zeros_like(p)
    adam_step(p, [np.zeros(2)], st_)
    assert p[0].tolist() == [1.5, -2.0]
    p = [np.array([0.0])]
    st_ = AdamState.zeros_like(p)
    prev = 0.0
    for _ in range(2):
        adam_step(p, [np.array([3.7])], st_)
        assert abs(p[0][0] - prev) <= 1e-3 * (1 + 1e-6)
        prev = p[0][0]
    with pytest.raises(ShapeMismatch):
        adam_step(p, [np.zeros(3)], st_)


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2))
    y = (X[:, 0] + X[:, 1] > 1.0).astype(float)
    return X, y


def test_train_mlp_separable_toy():
    X, y = _separable()
    m = build_mlp([2, 16, 1], np.random.default_rng(0))
    m, hist = train_mlp(m, X, y, BCE, epochs=50, batch_size=8, seed=0, lr=0.01)
    acc = ((predict(m, X).ravel() >= 0.5) == y).mean()
    assert acc >= 0.99
    assert hist[-1] < hist[0]


def test_train_zero_epochs_leaves_model_unchanged():
    X, y = _separable(20)
    m = build_mlp([2, 4, 1], np.random.default_rng(0))
    before = [p.copy() for p in m.params()]
    train_mlp(m, X, y, epochs=0)
    assert all(np.array_equal(a, b) for a, b in zip(before, m.params()))


def test_train_nonfinite_loss_aborts():
    m = build_mlp([2, 4, 1], np.random.default_rng(0), output=IDENTITY)
    X = np.full((4, 2), 1e200)
    with pytest.raises(NonFiniteLoss):
        train_mlp(m, X, np.ones(4), MSE, epochs=1)


def test_train_is_seed_deterministic():
    X, y = _separable(50)
    a = train_mlp(build_mlp([2, 4, 1], np.random.default_rng(0), dropout_rate=0.2), X, y, epochs=3, seed=5)[0]
    b = train_mlp(build_mlp([2, 4, 1], np.random.default_rng(0), dropout_rate=0.2), X, y, epochs=3, seed=5)[0]
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


def test_sae_shapes_and_zero_epochs():
    sae = build_sae(17, rng=np.random.default_rng(0))
    X = np.random.default_rng(1).random((5, 17))
    assert encode(sae, X).shape == (5, 16)
    before = reconstruction_loss(sae, X)
    train_autoencoder(sae, X, epochs=0)
    assert reconstruction_loss(sae, X) == before
    with pytest.raises(ValueError):
        train_autoencoder(sae, X * 2 - 0.5, epochs=1)


def test_sae_learns_low_rank_data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 2)) @ rng.normal(size=(2, 10))
    X = (X - X.min(0)) / (X.max(0) - X.min(0))
    sae = build_sae(10, rng=np.random.default_rng(1))
    e0 = reconstruction_excess(sae, X)
    train_autoencoder(sae, X, seed=0)
    assert reconstruction_excess(sae, X) <= 0.1 * e0


def test_mlp_serialization_round_trip_is_bit_exact():
    m = build_mlp([3, 5, 1], np.random.default_rng(0), dropout_rate=0.2)
    back = mlp_from_dict(mlp_to_dict(m))
    assert all(np.array_equal(p, q) for p, q in zip(m.params(), back.params()))
    assert back.dropout_rate == 0.2
    d = mlp_to_dict(m)
    d["schema"] = "icsids.mlp/99"
    with pytest.raises(UnsupportedVersion):
        mlp_from_dict(d)
    sae = build_sae(6, rng=np.random.default_rng(0))
    X = np.random.default_rng(1).random((3, 6))
    assert np.array_equal(encode(sae_from_dict(sae_to_dict(sae)), X), encode(sae, X))
