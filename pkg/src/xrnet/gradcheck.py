"""Central finite-difference verification of every layer kind and a tiny end-to-end model."""
from __future__ import annotations

import numpy as np

from . import layers as L
from .model import ModelConfig, build_model

TOLERANCE = 1e-4
EPS = 1e-5


def numerical_gradient(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (perturbed in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = f()
        flat[i] = orig - eps
        minus = f()
        flat[i] = orig
        g[i] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def _distinct(rng, shape, spacing=0.05):
    """Random values with pairwise gaps >= ``spacing`` (no pooling ties)."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * spacing - n * spacing / 2).reshape(shape).astype(np.float64)


def _away_from_zero(rng, shape, margin=1e-2):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.copysign(margin, x) * 2, x)


def check_layer(layer: L.Layer, x: np.ndarray, seed: int = 0, mode: str = L.EVAL) -> float:
    """Max relative error over input and parameter gradients of ``sum(layer(x) * R)``."""
    proj = np.random.default_rng(seed + 1).standard_normal(layer.forward(x, mode, np.random.default_rng(seed)).shape)

    def f():
        return float((layer.forward(x, mode, np.random.default_rng(seed)) * proj).sum())

    layer.forward(x, mode, np.random.default_rng(seed))
    gx, grads = L.layer_backward(layer, proj)
    errors = [relative_error(gx, numerical_gradient(f, x))]
    for name, p in layer.params.items():
        errors.append(relative_error(grads[name], numerical_gradient(f, p)))
    return max(errors)


def check_softmax_output(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((6, 3)) * 3
    labels = rng.integers(0, 3, 6)
    out = L.SoftmaxCrossEntropy()
    out.forward(logits, labels)
    analytic = out.backward()
    numeric = numerical_gradient(lambda: L.softmax_cross_entropy(logits, labels)[0], logits)
    return relative_error(analytic, numeric)


def tiny_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(input_size=8, conv_blocks=[2], fc_widths=[4], dropout_rate=0.0,
                       num_classes=2, seed=seed)


def check_model(seed: int = 0, config: ModelConfig | None = None) -> float:
    config = config or tiny_config(seed)
    model = build_model(config, dtype=np.float64)
    rng = np.random.default_rng(seed + 7)
    x = rng.random((3, config.input_size, config.input_size, config.channels))
    y = rng.integers(0, config.num_classes, 3)

    def f():
        return L.softmax_cross_entropy(model.logits(x, L.TRAIN), y)[0]

    model.loss_and_backward(x, y, L.TRAIN)
    grads = {k: v.copy() for k, v in model.gradients().items()}
    return max(relative_error(grads[name], numerical_gradient(f, p))
               for name, p in model.parameters().items())


def run_gradcheck(seed: int = 0) -> dict:
    """Max relative error per layer kind (plus ``"model"``), all in double precision."""
    rng = np.random.default_rng(seed)

    def conv(padding):
        layer = L.Conv2D(rng.standard_normal((3, 3, 2, 3)), rng.standard_normal(3), padding)
        return check_layer(layer, rng.standard_normal((2, 5, 5, 2)), seed)

    results = {
        "conv2d": max(conv(0), conv(1), conv(2)),
        "maxpool": check_layer(L.MaxPool2D(), _distinct(rng, (2, 5, 4, 3)), seed),
        "relu": check_layer(L.ReLU(), _away_from_zero(rng, (3, 7)), seed),
        "flatten": check_layer(L.Flatten(), rng.standard_normal((2, 3, 3, 2)), seed),
        "dense": check_layer(L.Dense(rng.standard_normal((5, 4)), rng.standard_normal(4)),
                             rng.standard_normal((3, 5)), seed),
        "dropout": check_layer(L.Dropout(0.5), rng.standard_normal((4, 6)), seed, L.TRAIN),
        "softmax_output": check_softmax_output(seed),
        "model": check_model(seed),
    }
    return results


def passed(results: dict, tolerance: float = TOLERANCE) -> bool:
    return all(err < tolerance for err in results.values())
