"""JSON run configuration shared by the CLI commands."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SplitSpec
from .errors import ConfigurationError
from .model import ModelConfig, TrainConfig

MANIFEST_NAME = "split_manifest.csv"
CHECKPOINT_NAME = "model.ckpt"


@dataclass
class RunConfig:
    data_root: Path
    output_dir: Path
    split: SplitSpec = field(default_factory=SplitSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    checkpoint_path: Path | None = None

    @property
    def manifest_path(self) -> Path:
        return self.output_dir / MANIFEST_NAME

    @property
    def checkpoint(self) -> Path:
        return self.checkpoint_path or self.output_dir / CHECKPOINT_NAME

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"data_root", "output_dir", "checkpoint_path", "split", "model", "train"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("data_root", "output_dir"):
            if not isinstance(d.get(key), str):
                raise ConfigurationError(f"config needs a string {key!r}")
        try:
            split = SplitSpec(**d.get("split", {}))
        except TypeError as exc:
            raise ConfigurationError(f"bad split section: {exc}") from None
        try:
            return cls(
                data_root=Path(d["data_root"]),
                output_dir=Path(d["output_dir"]),
                split=split,
                model=ModelConfig.from_dict(d.get("model", {})),
                train=TrainConfig.from_dict(d.get("train", {})),
                checkpoint_path=Path(d["checkpoint_path"]) if d.get("checkpoint_path") else None,
            )
        except TypeError as exc:
            raise ConfigurationError(f"bad config value: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist") from None
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    return RunConfig.from_dict(raw)
