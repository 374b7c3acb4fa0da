import numpy as np
import pytest

from xrnet.checkpoint import MAGIC, checkpoint_bytes, load_checkpoint, save_checkpoint
from xrnet.errors import (BadMagicError, CheckpointError, ShapeMismatchError,
                          TruncatedCheckpointError, VersionMismatchError)
from xrnet.model import ModelConfig, build_model


@pytest.fixture
def model():
    m = build_model(ModelConfig(input_size=16, conv_blocks=[3, 4], fc_widths=[6], seed=11))
    m.class_names = ["covid", "non_covid"]
    return m


def test_round_trip_bit_exact(tmp_path, model, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    assert loaded.class_names == ["covid", "non_covid"]
    for name, arr in model.parameters().items():
        assert loaded.parameters()[name].tobytes() == arr.tobytes()
    x = rng.random((4, 16, 16, 1)).astype(np.float32)
    assert loaded.forward(x).tobytes() == model.forward(x).tobytes()
    assert checkpoint_bytes(loaded) == path.read_bytes()


def test_header_layout(model):
    data = checkpoint_bytes(model)
    assert data[:4] == MAGIC == b"CXR1"
    assert int.from_bytes(data[4:8], "little") == 1


def test_bad_magic(tmp_path, model):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"NOPE" + checkpoint_bytes(model)[4:])
    with pytest.raises(BadMagicError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path, model):
    data = bytearray(checkpoint_bytes(model))
    data[4:8] = (7).to_bytes(4, "little")
    path = tmp_path / "m.ckpt"
    path.write_bytes(bytes(data))
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)


@pytest.mark.parametrize("cut", [2, 10, -5, -1000])
def test_truncated(tmp_path, model, cut):
    data = checkpoint_bytes(model)
    path = tmp_path / "m.ckpt"
    path.write_bytes(data[:cut])
    with pytest.raises(TruncatedCheckpointError):
        load_checkpoint(path)


def test_trailing_bytes(tmp_path, model):
    path = tmp_path / "m.ckpt"
    path.write_bytes(checkpoint_bytes(model) + b"\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_config_mismatch(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    other = ModelConfig(input_size=20, conv_blocks=[3, 4], fc_widths=[6])
    with pytest.raises(ShapeMismatchError, match="fc1.weights"):
        load_checkpoint(path, expected=other)
    # a different seed does not change shapes, so it loads
    load_checkpoint(path, expected=ModelConfig(input_size=16, conv_blocks=[3, 4], fc_widths=[6], seed=1))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_deterministic_bytes(model):
    assert checkpoint_bytes(model) == checkpoint_bytes(model)
