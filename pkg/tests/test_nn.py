"""Dense-layer engine: forward/backward exactness, optimizers, seeded streams."""

import numpy as np
import pytest

from detournet import DimensionError, NumericError, UsageError
from detournet.nn import (
    Adam, DenseLayer, SgdMomentum, cross_entropy, dense_backward, dense_forward,
    dense_forward_cached, finite_difference_grads, init_layer, model_backward,
    softmax, stack_forward, stream_rng,
)


def naive_matmul(w, x, b):
    # triple-loop oracle, deliberately independent of numpy matmul
    out = np.zeros((x.shape[0], w.shape[0]))
    for r in range(x.shape[0]):
        for o in range(w.shape[0]):
            acc = 0.0
            for i in range(w.shape[1]):
                acc += w[o, i] * x[r, i]
            out[r, o] = acc + b[o]
    return out


def test_identity_weights_relu_clamp():
    layer = DenseLayer(np.eye(2, dtype=np.float32), np.zeros(2, np.float32), "relu")
    out = dense_forward(layer, np.array([[2.0, -3.0]], dtype=np.float32))
    assert np.array_equal(out, [[2.0, 0.0]])


def test_zero_weights_pass_bias():
    layer = DenseLayer(np.zeros((1, 2), np.float32), np.array([5.0], np.float32),
                       "identity")
    out = dense_forward(layer, np.array([[9.0, 9.0]], dtype=np.float32))
    assert np.array_equal(out, [[5.0]])


def test_forward_matches_naive_matmul_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        w = rng.normal(size=(4, 6))
        b = rng.normal(size=4)
        x = rng.normal(size=(3, 6))
        layer = DenseLayer(w, b, "identity")
        got = dense_forward(layer, x)
        want = naive_matmul(w, x, b)
        assert np.allclose(got, want, rtol=1e-6)


def test_forward_is_pure():
    rng = np.random.default_rng(0)
    layer = init_layer(3, 2, rng)
    x = rng.normal(size=(4, 3)).astype(np.float32)
    x_copy = x.copy()
    a = dense_forward(layer, x)
    b = dense_forward(layer, x)
    assert np.array_equal(a, b)
    assert np.array_equal(x, x_copy)


def test_forward_shape_and_finite_errors():
    layer = init_layer(3, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        dense_forward(layer, np.zeros((1, 4), np.float32))
    with pytest.raises(NumericError):
        dense_forward(layer, np.array([[1.0, np.nan, 0.0]], dtype=np.float32))


def test_backward_requires_cache():
    layer = init_layer(3, 2, np.random.default_rng(0))
    with pytest.raises(UsageError):
        dense_backward(layer, None, np.zeros((1, 2)))


def test_softmax_ce_gradient_closed_form():
    # single identity layer: dL/dlogits = softmax(z) - onehot(target)
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(1, 4))
    labels = np.array([2])
    loss, dlogits = cross_entropy(logits.copy(), labels)
    want = softmax(logits)
    want[0, 2] -= 1.0
    assert np.allclose(dlogits, want, atol=1e-12)
    assert loss >= 0.0


def test_uniform_logits_loss_is_log_c():
    for c in (2, 5, 12):
        logits = np.zeros((7, c))
        labels = np.arange(7) % c
        loss, _ = cross_entropy(logits, labels)
        assert loss == pytest.approx(np.log(c), rel=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    for trial in range(5):
        dims = [int(rng.integers(2, 8)) for _ in range(4)]
        layers = [
            init_layer(dims[i], dims[i + 1], rng,
                       "relu" if i < 2 else "identity", dtype=np.float64)
            for i in range(3)
        ]
        for layer in layers:  # move off ReLU kinks
            layer.bias[:] = rng.normal(0, 0.1, size=layer.bias.shape)
        x = rng.normal(size=(4, dims[0]))
        y = rng.integers(0, dims[3], size=4)
        _, grads = model_backward(layers, x, y)
        fd = finite_difference_grads(layers, x, y, h=1e-5)
        for (dw, db), (fw, fb) in zip(grads, fd):
            denom = np.maximum(np.abs(fw), 1e-4)
            assert np.max(np.abs(dw - fw) / denom) < 1e-4
            denom = np.maximum(np.abs(fb), 1e-4)
            assert np.max(np.abs(db - fb) / denom) < 1e-4


def test_sgd_momentum_step():
    opt = SgdMomentum(lr=0.1, momentum=0.0)
    p = {"w": np.array([1.0])}
    opt.step(p, {"w": np.array([2.0])})
    assert p["w"][0] == pytest.approx(0.8, abs=1e-12)


def test_sgd_zero_gradient_keeps_params():
    opt = SgdMomentum(lr=0.1, momentum=0.0)
    p = {"w": np.array([1.5, -2.0])}
    before = p["w"].copy()
    opt.step(p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"], before)


def test_adam_first_step_magnitude_is_lr():
    # hand evaluation: m_hat = g, v_hat = g^2, so |step| = lr*|g|/(|g|+eps)
    opt = Adam(lr=0.01)
    p = {"w": np.array([5.0])}
    opt.step(p, {"w": np.array([3.0])})
    assert p["w"][0] == pytest.approx(5.0 - 0.01, rel=1e-6)


def test_optimizer_rejects_nonfinite_grad():
    opt = Adam(lr=0.01)
    with pytest.raises(NumericError):
        opt.step({"w": np.array([1.0])}, {"w": np.array([np.inf])})


def test_init_layer_he_uniform_bound():
    rng = stream_rng(0, "init")
    layer = init_layer(250, 16, rng)
    bound = np.sqrt(6.0 / 250)  # = 0.1549193...
    assert np.all(np.abs(layer.weights) <= bound)
    assert np.array_equal(layer.bias, np.zeros(16, np.float32))


def test_init_layer_deterministic_by_seed():
    a = init_layer(7, 5, stream_rng(42, "init"))
    b = init_layer(7, 5, stream_rng(42, "init"))
    assert np.array_equal(a.weights, b.weights)


def test_stream_rng_consumers_are_independent():
    a = stream_rng(9, "init").random(4)
    b = stream_rng(9, "failout").random(4)
    c = stream_rng(9, "init").random(4)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)


def test_stream_rng_rejects_unknown_consumer():
    with pytest.raises(UsageError):
        stream_rng(0, "nope")


def test_stack_forward_composition():
    rng = np.random.default_rng(8)
    layers = [init_layer(3, 4, rng), init_layer(4, 2, rng, "identity")]
    x = rng.normal(size=(5, 3)).astype(np.float32)
    out, caches = stack_forward(layers, x)
    step = dense_forward(layers[1], dense_forward(layers[0], x))
    assert np.allclose(out, step)
    assert len(caches) == 2
