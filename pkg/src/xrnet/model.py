"""The three-block convolutional classifier: configuration, assembly, training."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .data import batch_indices
from .errors import ConfigurationError, DataError, NumericError
from .optim import AdamState, adam_step, sgd_step

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    input_size: int = 256
    channels: int = 1
    conv_blocks: list = field(default_factory=lambda: [64, 128, 128])
    kernel: int = 3
    padding: int = 2
    fc_widths: list = field(default_factory=lambda: [1024, 1024])
    dropout_rate: float = 0.2
    num_classes: int = 2
    seed: int = 0

    def __post_init__(self):
        self.conv_blocks = [int(f) for f in self.conv_blocks]
        self.fc_widths = [int(w) for w in self.fc_widths]
        if self.input_size < 1 or self.channels < 1 or self.kernel < 1 or self.padding < 0:
            raise ConfigurationError(f"invalid model geometry in {self}")
        if any(f < 1 for f in self.conv_blocks) or any(w < 1 for w in self.fc_widths):
            raise ConfigurationError("filter counts and layer widths must be positive")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be at least 2")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigurationError(f"dropout rate must lie in [0, 1), got {self.dropout_rate}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainConfig:
    epochs: int = 45
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TraceEntry:
    name: str
    input_shape: tuple
    output_shape: tuple


class Model:
    """Sequential stack of layers ending in a fused softmax/cross-entropy output."""

    def __init__(self, config: ModelConfig, named_layers: list, trace: list, dtype=np.float32):
        self.config = config
        self.named_layers = named_layers
        self.trace = trace
        self.dtype = np.dtype(dtype)
        self.output = L.SoftmaxCrossEntropy()
        self.class_names = [f"class{i}" for i in range(config.num_classes)]

    @property
    def layers(self):
        return [layer for _, layer in self.named_layers]

    def parameters(self) -> dict:
        """Name -> array mapping; the arrays are the live layer parameters."""
        return {f"{name}.{p}": arr for name, layer in self.named_layers for p, arr in layer.params.items()}

    def gradients(self) -> dict:
        return {f"{name}.{p}": layer.grads[p] for name, layer in self.named_layers for p in layer.params}

    def _check_batch(self, x):
        c = self.config
        expected = (c.input_size, c.input_size, c.channels)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise DataError(f"batch shape {x.shape} does not match model input (B, {expected})")
        return np.asarray(x, dtype=self.dtype)

    def logits(self, x, mode=L.EVAL, rng=None):
        out = self._check_batch(x)
        for layer in self.layers:
            out = layer.forward(out, mode, rng)
        return out

    def forward(self, x, mode=L.EVAL, rng=None):
        """Class probabilities, shape ``(B, num_classes)``."""
        return L.softmax(self.logits(x, mode, rng))

    def loss_and_backward(self, x, labels, mode=L.TRAIN, rng=None):
        """Forward, loss, and backward through every layer; gradients land in ``layer.grads``."""
        loss, probs = self.output.forward(self.logits(x, mode, rng), labels)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss}")
        grad = self.output.backward()
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return loss, probs

    def shape_trace(self) -> str:
        lines = [f"{'layer':<10} {'input':>18} {'output':>18}"]
        for e in self.trace:
            lines.append(f"{e.name:<10} {'x'.join(map(str, e.input_shape)):>18} "
                         f"{'x'.join(map(str, e.output_shape)):>18}")
        return "\n".join(lines)


def _he_normal(rng, shape, fan_in, dtype, init=True):
    if not init:
        return np.broadcast_to(np.zeros((), dtype), shape)
    # drawn in float32 so single- and double-precision builds share initial values
    w = rng.standard_normal(shape, dtype=np.float32)
    w *= np.float32(math.sqrt(2.0 / fan_in))
    return w.astype(dtype, copy=False)


def build_model(config: ModelConfig, dtype=np.float32, init: bool = True) -> Model:
    """Assemble [Conv-ReLU-Pool] x n -> Flatten -> [Dense-ReLU-Dropout] x m -> Dense.

    Weights are He-normal from ``config.seed``; biases start at zero. With
    ``init=False`` every parameter is a read-only zero-stride placeholder, which
    is enough for shape checks and for loading a checkpoint into.
    """
    rng = np.random.default_rng(config.seed)
    k = config.kernel
    named = []
    trace = []
    shape = (config.input_size, config.input_size, config.channels)

    def add(name, layer):
        nonlocal shape
        try:
            out = layer.output_shape(shape)
        except ConfigurationError as exc:
            raise ConfigurationError(f"layer {name}: {exc}") from None
        trace.append(TraceEntry(name, shape, out))
        named.append((name, layer))
        shape = out

    for i, filters in enumerate(config.conv_blocks, start=1):
        cin = shape[-1]
        kernels = _he_normal(rng, (k, k, cin, filters), k * k * cin, dtype, init)
        add(f"conv{i}", L.Conv2D(kernels, np.zeros(filters, dtype), config.padding))
        add(f"relu{i}", L.ReLU())
        add(f"pool{i}", L.MaxPool2D())
    add("flatten", L.Flatten())
    for i, width in enumerate(config.fc_widths, start=1):
        fan_in = shape[0]
        add(f"fc{i}", L.Dense(_he_normal(rng, (fan_in, width), fan_in, dtype, init), np.zeros(width, dtype)))
        add(f"fc{i}_relu", L.ReLU())
        add(f"fc{i}_drop", L.Dropout(config.dropout_rate))
    fan_in = shape[0]
    add("output", L.Dense(_he_normal(rng, (fan_in, config.num_classes), fan_in, dtype, init),
                          np.zeros(config.num_classes, dtype)))
    return Model(config, named, trace, dtype)


def parameter_shapes(config: ModelConfig) -> dict:
    return {name: arr.shape for name, arr in build_model(config, init=False).parameters().items()}


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self):
        return [r.loss for r in self.records]

    @property
    def accuracies(self):
        return [r.train_accuracy for r in self.records]

    def to_csv(self) -> str:
        rows = ["epoch,loss,train_accuracy"]
        rows += [f"{r.epoch},{r.loss!r},{r.train_accuracy!r}" for r in self.records]
        return "\n".join(rows) + "\n"


def train(model: Model, images: np.ndarray, labels: np.ndarray, config: TrainConfig,
          rng: np.random.Generator | None = None) -> TrainingHistory:
    """Mini-batch training; one full shuffled pass per epoch, last partial batch kept.

    ``rng`` drives dropout masks only; batch order comes from ``(config.seed, epoch)``.
    """
    n = len(labels)
    if n == 0:
        raise DataError("training set is empty")
    if len(images) != n:
        raise DataError(f"{len(images)} images but {n} labels")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    params = model.parameters()
    state = AdamState(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    history = TrainingHistory()
    for epoch in range(config.epochs):
        total_loss = 0.0
        correct = 0
        for b, idx in enumerate(batch_indices(n, config.batch_size, config.seed, epoch)):
            y = labels[idx]
            try:
                loss, probs = model.loss_and_backward(images[idx], y, L.TRAIN, rng)
                grads = model.gradients()
                if config.optimizer == "adam":
                    adam_step(params, grads, state)
                else:
                    sgd_step(params, grads, config.learning_rate)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from None
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y).sum())
        record = EpochRecord(epoch + 1, total_loss / n, correct / n)
        history.records.append(record)
        log.info("epoch %d/%d loss=%.6f train_accuracy=%.4f",
                 record.epoch, config.epochs, record.loss, record.train_accuracy)
    return history


def predict(model: Model, images: np.ndarray, batch_size: int = 64):
    """Eval-mode class indices and probabilities; ties go to the lower class index."""
    if len(images) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, model.config.num_classes), model.dtype)
    probs = np.concatenate([
        model.forward(images[i:i + batch_size], L.EVAL) for i in range(0, len(images), batch_size)
    ])
    return argmax_classes(probs), probs


def argmax_classes(probs: np.ndarray) -> np.ndarray:
    return np.argmax(probs, axis=1)
