"""Minimal dense-layer engine: forward, exact backprop, optimizers, seeded RNG.

Activations live in plain numpy arrays, row-major, shape [batch, dim].
Default precision is float32; pass dtype=np.float64 when verifying
gradients against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, UsageError

RELU = "relu"
IDENTITY = "identity"

# Fixed stream ids so every consumer draws from an independent, reproducible
# substream of the run seed regardless of call order.
_STREAM_IDS = {
    "init": 0,
    "failout": 1,
    "shuffle": 2,
    "monte-carlo": 3,
    "data": 4,
    "sim-failures": 5,
    "sim-arrivals": 6,
    "sim-chance": 7,
    "weights": 8,
}


def stream_rng(seed: int, consumer: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one consumer of a run seed.

    Identical (seed, consumer, index) always yields the identical draw
    sequence; distinct consumers never share a stream.
    """
    if consumer not in _STREAM_IDS:
        raise UsageError(f"unknown rng consumer {consumer!r}; known: {sorted(_STREAM_IDS)}")
    key = (_STREAM_IDS[consumer], index)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values at {where}")
    return x


@dataclass
class DenseLayer:
    """Fully connected layer y = act(x @ W.T + b)."""

    weights: np.ndarray  # [out, in]
    bias: np.ndarray     # [out]
    activation: str = RELU

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError("weights must be [out, in], bias [out]")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise DimensionError(
                f"bias dim {self.bias.shape[0]} != weight rows {self.weights.shape[0]}"
            )
        if self.activation not in (RELU, IDENTITY):
            raise UsageError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class LayerCache:
    """Forward-pass intermediates needed by the exact backward pass."""

    x: np.ndarray  # layer input [B, in]
    z: np.ndarray  # pre-activation [B, out]


def init_layer(in_dim: int, out_dim: int, rng: np.random.Generator,
               activation: str = RELU, dtype=np.float32) -> DenseLayer:
    """He-uniform weights (bound sqrt(6/in)) and zero bias."""
    if in_dim < 1 or out_dim < 1:
        raise DimensionError("layer dims must be >= 1")
    bound = np.sqrt(6.0 / in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)
    b = np.zeros(out_dim, dtype=dtype)
    return DenseLayer(w, b, activation)


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Pure forward pass; rejects shape mismatches and non-finite input."""
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(f"input shape {x.shape} incompatible with in_dim {layer.in_dim}")
    check_finite(x, "dense_forward input")
    z = x @ layer.weights.T + layer.bias
    if layer.activation == RELU:
        return np.maximum(z, 0.0)
    return z


def dense_forward_cached(layer: DenseLayer, x: np.ndarray) -> tuple[np.ndarray, LayerCache]:
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(f"input shape {x.shape} incompatible with in_dim {layer.in_dim}")
    check_finite(x, "dense_forward input")
    z = x @ layer.weights.T + layer.bias
    y = np.maximum(z, 0.0) if layer.activation == RELU else z
    return y, LayerCache(x=x, z=z)


def dense_backward(layer: DenseLayer, cache: LayerCache | None,
                   dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dW, db, dx) given upstream dy; needs the forward cache."""
    if cache is None:
        raise UsageError("backward called without a cached forward pass")
    if layer.activation == RELU:
        dz = dy * (cache.z > 0)
    else:
        dz = dy
    dw = dz.T @ cache.x
    db = dz.sum(axis=0)
    dx = dz @ layer.weights
    return dw, db, dx


def stack_forward(layers: Sequence[DenseLayer], x: np.ndarray,
                  ) -> tuple[np.ndarray, list[LayerCache]]:
    caches = []
    out = x
    for layer in layers:
        out, cache = dense_forward_cached(layer, out)
        caches.append(cache)
    return out, caches


def stack_backward(layers: Sequence[DenseLayer], caches: Sequence[LayerCache],
                   dy: np.ndarray) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backprop through a layer stack; returns per-layer (dW, db) and dx."""
    if len(caches) != len(layers):
        raise UsageError("cache list does not match layer stack")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    d = dy
    for i in range(len(layers) - 1, -1, -1):
        dw, db, d = dense_backward(layers[i], caches[i], d)
        grads[i] = (dw, db)
    return grads, d


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss and d(loss)/d(logits).

    Returned gradient is (softmax - onehot) / batch, the exact derivative of
    the mean loss.
    """
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise DimensionError("labels must be [B] aligned with logits [B, C]")
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise UsageError(f"label outside [0, {c})")
    p = softmax(logits)
    eps = np.finfo(logits.dtype).tiny
    loss = float(-np.log(p[np.arange(n), labels] + eps).mean())
    dlogits = p
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def model_backward(layers: Sequence[DenseLayer], x: np.ndarray, labels: np.ndarray,
                   ) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Loss and exact gradients for a sequential stack ending in logits."""
    logits, caches = stack_forward(layers, x)
    loss, dlogits = cross_entropy(logits, labels)
    grads, _ = stack_backward(layers, caches, dlogits)
    return loss, grads


def predict(layers: Sequence[DenseLayer], x: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    out = x
    for layer in layers:
        out = dense_forward(layer, out)
    return np.argmax(out, axis=1)


# --- optimizers -------------------------------------------------------------
#
# Parameters are addressed by opaque slot keys so the training loop can
# update an arbitrary subset per batch (nodes dropped by failout must stay
# bit-identical, which rules out "zero gradient" updates under Adam).


class SgdMomentum:
    """v <- mu*v - lr*g; p <- p + v, tracked per slot."""

    kind = "sgd-momentum"

    def __init__(self, lr: float = 0.001, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self._velocity: dict = {}
        self.steps = 0

    def step(self, params: dict, grads: dict) -> None:
        self.steps += 1
        for slot, g in grads.items():
            p = params[slot]
            check_finite(g, f"gradient for {slot}")
            v = self._velocity.get(slot)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v - self.lr * g
            self._velocity[slot] = v
            p += v
            check_finite(p, f"parameter {slot} after step")


class Adam:
    """Adam with bias correction; per-slot step counters so skipped slots stay frozen."""

    kind = "adam"

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict = {}
        self._v: dict = {}
        self._t: dict = {}
        self.steps = 0

    def step(self, params: dict, grads: dict) -> None:
        self.steps += 1
        for slot, g in grads.items():
            p = params[slot]
            check_finite(g, f"gradient for {slot}")
            m = self._m.get(slot)
            if m is None:
                m = np.zeros_like(p)
                self._v[slot] = np.zeros_like(p)
                self._t[slot] = 0
            v = self._v[slot]
            t = self._t[slot] + 1
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            self._m[slot], self._v[slot], self._t[slot] = m, v, t
            check_finite(p, f"parameter {slot} after step")


def make_optimizer(kind: str, lr: float, momentum: float = 0.9):
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd-momentum":
        return SgdMomentum(lr=lr, momentum=momentum)
    raise UsageError(f"unknown optimizer {kind!r}")


def finite_difference_grads(layers: Sequence[DenseLayer], x: np.ndarray,
                            labels: np.ndarray, h: float = 1e-5,
                            ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Central finite differences of the mean cross-entropy loss.

    Independent oracle for backprop; intended for float64 stacks only.
    """

    def loss_at() -> float:
        logits, _ = stack_forward(layers, x)
        loss, _ = cross_entropy(logits, labels)
        return loss

    out = []
    for layer in layers:
        dw = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            orig = layer.weights[idx]
            layer.weights[idx] = orig + h
            up = loss_at()
            layer.weights[idx] = orig - h
            down = loss_at()
            layer.weights[idx] = orig
            dw[idx] = (up - down) / (2 * h)
        db = np.zeros_like(layer.bias)
        for idx in np.ndindex(layer.bias.shape):
            orig = layer.bias[idx]
            layer.bias[idx] = orig + h
            up = loss_at()
            layer.bias[idx] = orig - h
            down = loss_at()
            layer.bias[idx] = orig
            db[idx] = (up - down) / (2 * h)
        out.append((dw, db))
    return out
