"""Seeded synthetic two-class image sets: a centred bright blob vs horizontal stripes."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

CLASS_NAMES = ["blob", "stripes"]


def blob(size: int, rng: np.random.Generator, noise: float = 0.1) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size] - (size - 1) / 2
    sigma = size / 6 * rng.uniform(0.8, 1.2)
    img = 0.15 + 0.8 * np.exp(-(yy ** 2 + xx ** 2) / (2 * sigma ** 2))
    return np.clip(img + noise * rng.standard_normal((size, size)), 0, 1)


def stripes(size: int, rng: np.random.Generator, noise: float = 0.1) -> np.ndarray:
    period = rng.integers(4, 7)
    phase = rng.uniform(0, 2 * np.pi)
    rows = 0.5 + 0.35 * np.sin(2 * np.pi * np.arange(size) / period + phase)
    img = np.repeat(rows[:, None], size, axis=1)
    return np.clip(img + noise * rng.standard_normal((size, size)), 0, 1)


def make_dataset(n: int = 40, size: int = 32, seed: int = 0, noise: float = 0.1):
    """``n`` images ``(n, size, size, 1)`` float32 in [0, 1] with alternating labels 0/1."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    images = np.stack([(blob if lab == 0 else stripes)(size, rng, noise) for lab in labels])
    return images[..., None].astype(np.float32), labels.astype(np.int64)


def write_image_folder(root, n: int = 40, size: int = 32, seed: int = 0) -> Path:
    """Write :func:`make_dataset` as 8-bit PNGs under ``root/<class>/NNN.png``."""
    root = Path(root)
    images, labels = make_dataset(n, size, seed)
    for name in CLASS_NAMES:
        (root / name).mkdir(parents=True, exist_ok=True)
    for i, (img, lab) in enumerate(zip(images, labels)):
        pixels = np.round(img[..., 0] * 255).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(root / CLASS_NAMES[lab] / f"{i:03d}.png")
    return root
