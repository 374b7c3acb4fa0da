"""Binary checkpoint format.

Layout (all integers little-endian uint32)::

    b"CXR1" | version | header_len | header JSON (utf-8) | n_tensors
    then per tensor: name_len | name (utf-8) | ndim | dims... | float32 LE values

The JSON header holds the model configuration and class names. Values are
stored as float32, so single-precision models round-trip bit-exactly.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, CheckpointError, ShapeMismatchError,
                     TruncatedCheckpointError, VersionMismatchError, ConfigurationError)
from .model import Model, ModelConfig, build_model, parameter_shapes

MAGIC = b"CXR1"
VERSION = 1
_U32 = struct.Struct("<I")
_F32 = np.dtype("<f4")


def checkpoint_bytes(model: Model) -> bytes:
    header = json.dumps({"model": model.config.to_dict(), "class_names": model.class_names},
                        sort_keys=True).encode()
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(header)), header]
    params = model.parameters()
    parts.append(_U32.pack(len(params)))
    for name, arr in params.items():
        raw = name.encode()
        parts += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
        parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return b"".join(parts)


def save_checkpoint(model: Model, path) -> None:
    path = Path(path)
    if path.parent:
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(f"checkpoint truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def parse_checkpoint(data: bytes, expected: ModelConfig | None = None) -> Model:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError("not an xrnet checkpoint (bad magic)")
    version = r.u32("version")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads {VERSION}")
    try:
        header = json.loads(r.take(r.u32("header length"), "header").decode())
        config = ModelConfig.from_dict(header["model"])
        class_names = list(header["class_names"])
    except (ValueError, KeyError, TypeError, ConfigurationError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None

    shapes = parameter_shapes(config)
    if expected is not None:
        want = parameter_shapes(expected)
        for name in sorted(set(want) | set(shapes)):
            if want.get(name) != shapes.get(name):
                raise ShapeMismatchError(
                    f"checkpoint parameter {name} has shape {shapes.get(name)}, "
                    f"expected {want.get(name)} from the configured model"
                )

    tensors = {}
    for _ in range(r.u32("tensor count")):
        name = r.take(r.u32("name length"), "tensor name").decode()
        shape = tuple(r.u32(f"{name} dims") for _ in range(r.u32(f"{name} rank")))
        if shapes.get(name) != shape:
            raise ShapeMismatchError(f"tensor {name} has shape {shape}, config implies {shapes.get(name)}")
        count = int(np.prod(shape))
        raw = r.take(count * 4, f"tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype=_F32).astype(np.float32).reshape(shape)
    if tensors.keys() != shapes.keys():
        missing = sorted(set(shapes) - set(tensors))
        raise ShapeMismatchError(f"checkpoint is missing tensors {missing}")
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last tensor")

    model = build_model(config, init=False)
    for lname, layer in model.named_layers:
        for p in layer.params:
            layer.params[p] = tensors[f"{lname}.{p}"]
    model.class_names = class_names
    return model


def load_checkpoint(path, expected: ModelConfig | None = None) -> Model:
    """Read a checkpoint; ``expected`` (if given) must imply identical parameter shapes."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return parse_checkpoint(data, expected)
