"""Parameter update rules: Adam with bias correction, and plain SGD."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError


def _check_grads(params: dict, grads: dict) -> None:
    if params.keys() != grads.keys():
        raise ConfigurationError(f"gradient names {sorted(grads)} != parameter names {sorted(params)}")
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ConfigurationError(f"gradient for {name!r} has shape {np.shape(g)}, parameter {np.shape(p)}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1) or self.epsilon <= 0:
            raise ConfigurationError("Adam betas must lie in (0, 1) and epsilon must be positive")


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Apply one Adam update in place to every array in ``params``.

    Moments are created lazily (zeros) the first time a parameter name is seen.
    """
    _check_grads(params, grads)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(p))
        v = state.second_moment.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype, copy=False)


def sgd_step(params: dict, grads: dict, learning_rate: float) -> None:
    _check_grads(params, grads)
    for name, p in params.items():
        p -= (learning_rate * grads[name]).astype(p.dtype, copy=False)
