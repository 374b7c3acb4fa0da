"""Differentiable layers with a uniform forward/backward contract.

Each layer caches what it needs during ``forward`` and consumes that cache in
``backward``; calling ``backward`` without a preceding ``forward`` is an error.
Parameter gradients are left in ``layer.grads`` keyed like ``layer.params``.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DataError, UsageError

TRAIN = "train"
EVAL = "eval"


def _check_mode(mode: str) -> str:
    if mode not in (TRAIN, EVAL):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode


# -- functional forms -------------------------------------------------------

def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ConfigurationError(f"dense input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ConfigurationError(f"dense bias shape {bias.shape} != ({weights.shape[1]},)")
    T.check_finite(x, "dense input")
    return x @ weights + bias


def dense_backward(x, weights, upstream):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    return upstream @ weights.T, x.T @ upstream, upstream.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    T.check_finite(x, "relu input")
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return np.where(x > 0, upstream, 0)


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if not 0 <= rate < 1:
        raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype(1 - rate)


def dropout(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Apply dropout; returns ``(output, mask)`` where mask is None in eval mode."""
    if not 0 <= rate < 1:
        raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
    if _check_mode(mode) == EVAL or rate == 0:
        return x, None
    if rng is None:
        raise ConfigurationError("train-mode dropout requires a random generator")
    mask = dropout_mask(x.shape, rate, rng, x.dtype.type)
    return x * mask, mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _onehot(labels: np.ndarray, batch: int, k: int, dtype) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != (batch, k):
            raise DataError(f"one-hot labels shape {labels.shape} != {(batch, k)}")
        return labels.astype(dtype)
    if labels.shape != (batch,):
        raise DataError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"label index out of range for {k} classes")
    out = np.zeros((batch, k), dtype=dtype)
    out[np.arange(batch), labels.astype(np.int64)] = 1
    return out


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy of softmax(logits); returns ``(loss, probs)``."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ConfigurationError(f"logits must be B x K with K >= 2, got {logits.shape}")
    T.check_finite(logits, "logits")
    b, k = logits.shape
    onehot = _onehot(labels, b, k, logits.dtype)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    # per-row terms reduced in float64 so the batch mean does not depend on float32 summation order
    per_sample = -(onehot * log_probs).sum(axis=1).astype(np.float64)
    loss = float(per_sample.sum() / b)
    return loss, np.exp(log_probs)


def softmax_cross_entropy_backward(probs: np.ndarray, labels) -> np.ndarray:
    b, k = probs.shape
    return (probs - _onehot(labels, b, k, probs.dtype)) / b


# -- layer objects ----------------------------------------------------------

class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None
        self.mode = EVAL

    def forward(self, x, mode=EVAL, rng=None):
        self.mode = _check_mode(mode)
        out, self._cache = self._forward(x, mode, rng)
        return out

    def backward(self, upstream):
        if self._cache is None:
            raise UsageError(f"{self.kind}: backward called before forward")
        downstream, self.grads = self._backward(upstream, self._cache)
        return downstream

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def _forward(self, x, mode, rng):
        raise NotImplementedError

    def _backward(self, upstream, cache):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, kernels: np.ndarray, bias: np.ndarray, padding: int):
        super().__init__()
        k, k2, c, f = kernels.shape
        self.geom = T.ConvGeometry(k, padding, c, f)
        if k != k2 or bias.shape != (f,):
            raise ConfigurationError(f"bad conv parameter shapes {kernels.shape}, {bias.shape}")
        self.params = {"kernels": kernels, "bias": bias}

    def output_shape(self, shape):
        h, w, c = shape
        if c != self.geom.in_channels:
            raise ConfigurationError(f"conv2d expects {self.geom.in_channels} channels, got {c}")
        return self.geom.output_extent(h), self.geom.output_extent(w), self.geom.out_channels

    def _forward(self, x, mode, rng):
        out = T.conv2d_forward(x, self.params["kernels"], self.params["bias"], self.geom.padding)
        return out, x

    def _backward(self, upstream, x):
        gx, gk, gb = T.conv2d_backward(x, self.params["kernels"], upstream, self.geom.padding)
        return gx, {"kernels": gk.astype(self.params["kernels"].dtype, copy=False),
                    "bias": gb.astype(self.params["bias"].dtype, copy=False)}


class MaxPool2D(Layer):
    kind = "maxpool"

    def output_shape(self, shape):
        h, w, c = shape
        if h < T.POOL or w < T.POOL:
            raise ConfigurationError(f"feature map {h}x{w} too small for 2x2 pooling")
        return h // T.POOL, w // T.POOL, c

    def _forward(self, x, mode, rng):
        out, argmax = T.maxpool2d_forward(x)
        return out, (argmax, x.shape)

    def _backward(self, upstream, cache):
        argmax, shape = cache
        return T.maxpool2d_backward(argmax, upstream, shape), {}


class ReLU(Layer):
    kind = "relu"

    def _forward(self, x, mode, rng):
        return relu(x), x

    def _backward(self, upstream, x):
        return relu_backward(x, upstream), {}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def _forward(self, x, mode, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def _backward(self, upstream, shape):
        return upstream.reshape(shape), {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        super().__init__()
        if weights.ndim != 2 or bias.shape != (weights.shape[1],):
            raise ConfigurationError(f"bad dense parameter shapes {weights.shape}, {bias.shape}")
        self.params = {"weights": weights, "bias": bias}

    def output_shape(self, shape):
        if shape != (self.params["weights"].shape[0],):
            raise ConfigurationError(
                f"dense expects {self.params['weights'].shape[0]} inputs, got {shape}"
            )
        return (self.params["weights"].shape[1],)

    def _forward(self, x, mode, rng):
        return dense_forward(x, self.params["weights"], self.params["bias"]), x

    def _backward(self, upstream, x):
        gx, gw, gb = dense_backward(x, self.params["weights"], upstream)
        return gx, {"weights": gw, "bias": gb}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0 <= rate < 1:
            raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def _forward(self, x, mode, rng):
        out, mask = dropout(x, self.rate, mode, rng)
        return out, (mask,)

    def _backward(self, upstream, cache):
        mask, = cache
        return (upstream if mask is None else upstream * mask), {}

    def __repr__(self):
        return f"Dropout(rate={self.rate})"


class SoftmaxCrossEntropy:
    """Softmax output layer fused with categorical cross-entropy."""

    kind = "softmax_output"

    def __init__(self):
        self._cache = None

    def forward(self, logits, labels):
        loss, probs = softmax_cross_entropy(logits, labels)
        self._cache = (probs, labels)
        return loss, probs

    def backward(self):
        if self._cache is None:
            raise UsageError("softmax_output: backward called before forward")
        return softmax_cross_entropy_backward(*self._cache)


def layer_backward(layer: Layer, upstream: np.ndarray):
    """Functional form of ``layer.backward``: returns ``(downstream, parameter_grads)``."""
    downstream = layer.backward(upstream)
    return downstream, dict(layer.grads)
