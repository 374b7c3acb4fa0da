"""Image ingestion, preprocessing, stratified splitting and batching."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, DataError, LayoutError, ManifestError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class Sample:
    image: np.ndarray | None
    label: int
    source_path: str


@dataclass
class Dataset:
    samples: list
    class_names: list
    skipped: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def images(self) -> np.ndarray:
        """Stacked images, ``(N, S, S, 1)`` float32."""
        return np.stack([s.image for s in self.samples]).astype(np.float32, copy=False)

    def class_counts(self) -> list:
        return np.bincount(self.labels, minlength=len(self.class_names)).tolist()

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], self.class_names)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise ConfigurationError("split seed must be non-negative")


# -- preprocessing ----------------------------------------------------------

def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    """Collapse an ``H x W`` or ``H x W x C`` image to one float channel.

    Three or four channels use ITU-R 601 luma weights; alpha is ignored.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        return pixels.astype(np.float64)
    if pixels.ndim == 3:
        c = pixels.shape[2]
        if c == 1:
            return pixels[..., 0].astype(np.float64)
        if c in (3, 4):
            return pixels[..., :3].astype(np.float64) @ LUMA
    raise DataError(f"unsupported image shape {pixels.shape}")


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image: np.ndarray, height: int, width: int | None = None) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping."""
    width = height if width is None else width
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise DataError(f"cannot resize image of shape {image.shape}")
    if height < 1 or width < 1:
        raise ConfigurationError(f"invalid target size {height}x{width}")
    y0, y1, fy = _axis_weights(image.shape[0], height)
    x0, x1, fx = _axis_weights(image.shape[1], width)
    rows = image[y0] * (1 - fy)[:, None] + image[y1] * fy[:, None]
    return rows[:, x0] * (1 - fx) + rows[:, x1] * fx


def normalize(pixels):
    return np.asarray(pixels, dtype=np.float64) / 255.0


def decode_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file into a uint8 array (H x W or H x W x C)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB", "RGBA"):
            img = img.convert("RGBA" if "A" in img.getbands() else "RGB")
        return np.asarray(img)


def preprocess(pixels: np.ndarray, size: int) -> np.ndarray:
    """grayscale -> resize to ``size`` x ``size`` -> scale to [0, 1]; returns ``(S, S, 1)``."""
    gray = to_grayscale(pixels)
    if gray.shape != (size, size):
        gray = resize_bilinear(gray, size)
    return np.clip(normalize(gray), 0.0, 1.0).astype(np.float32)[..., None]


def load_image(path, size: int) -> np.ndarray:
    try:
        return preprocess(decode_image(path), size)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DataError(f"cannot decode {path}: {exc}") from None


# -- dataset loading --------------------------------------------------------

def class_directories(root) -> list:
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"data root {root} is not a directory")
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(dirs) != 2:
        raise LayoutError(f"{root} must contain exactly two class subdirectories, found {len(dirs)}")
    return dirs


def list_images(root) -> tuple[list, list]:
    """``(class_names, [(relative_path, label), ...])`` in sorted, deterministic order."""
    root = Path(root)
    dirs = class_directories(root)
    entries = []
    for label, d in enumerate(dirs):
        files = sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        entries += [(p.relative_to(root).as_posix(), label) for p in files]
    return [d.name for d in dirs], entries


def load_samples(root, entries, size: int) -> tuple[list, int]:
    """Decode ``(relative_path, label)`` entries; undecodable files are skipped with a warning."""
    samples, skipped = [], 0
    for rel, label in entries:
        try:
            samples.append(Sample(load_image(Path(root) / rel, size), label, rel))
        except DataError as exc:
            log.warning("skipping %s", exc)
            skipped += 1
    return samples, skipped


def load_dataset(root_dir, image_size: int = 256) -> Dataset:
    """Load a two-class image folder; class index follows sorted subdirectory name."""
    class_names, entries = list_images(root_dir)
    samples, skipped = load_samples(root_dir, entries, image_size)
    ds = Dataset(samples, class_names, skipped)
    counts = ds.class_counts()
    if skipped:
        log.warning("%d file(s) could not be decoded and were skipped", skipped)
    for name, n in zip(class_names, counts):
        if n == 0:
            raise DataError(f"class {name!r} has no usable images")
    log.info("loaded %s", ", ".join(f"{n}={c}" for n, c in zip(class_names, counts)))
    return ds


# -- splitting and batching -------------------------------------------------

def train_count(n: int, fraction: float) -> int:
    """``round_half_up(n * fraction)`` evaluated in decimal so 0.5 boundaries are exact."""
    value = Decimal(n) * Decimal(str(fraction))
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def stratified_split_indices(labels, fraction: float, seed: int):
    """Per-class seeded shuffle; the first ``train_count`` of each class go to train.

    Returns sorted ``(train_indices, test_indices)``.
    """
    SplitSpec(fraction, seed)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        k = train_count(len(members), fraction)
        if k == 0 or k == len(members):
            raise ConfigurationError(
                f"fraction {fraction} leaves class {cls} ({len(members)} samples) with an empty side"
            )
        train.append(members[:k])
        test.append(members[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(dataset: Dataset, spec: SplitSpec):
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    tr, te = stratified_split_indices(dataset.labels, spec.train_fraction, spec.seed)
    return dataset.subset(tr), dataset.subset(te)


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list:
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int):
    """``(images, labels)`` pairs covering every sample once, in an epoch-seeded order."""
    labels = dataset.labels
    out = []
    for idx in batch_indices(len(dataset), batch_size, seed, epoch):
        sub = dataset.subset(idx)
        out.append((sub.images, labels[idx]))
    return out


# -- split manifest ---------------------------------------------------------

@dataclass
class Manifest:
    class_names: list
    rows: list = field(default_factory=list)  # (path, label, split)

    def entries(self, split: str) -> list:
        return [(p, lab) for p, lab, s in self.rows if s == split]

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("# classes: " + ",".join(self.class_names) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        w.writerows(self.rows)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# classes: "):
            raise ManifestError("manifest is missing its '# classes:' header")
        names = lines[0][len("# classes: "):].split(",")
        reader = csv.reader(lines[1:])
        if next(reader, None) != ["path", "label", "split"]:
            raise ManifestError("manifest is missing the 'path,label,split' header row")
        rows = []
        for lineno, row in enumerate(reader, start=3):
            try:
                path, label, split = row
                label = int(label)
            except ValueError:
                raise ManifestError(f"manifest line {lineno}: malformed row {row!r}") from None
            if split not in ("train", "test") or not 0 <= label < len(names):
                raise ManifestError(f"manifest line {lineno}: bad label or split in {row!r}")
            rows.append((path, label, split))
        return cls(names, rows)


def build_manifest(class_names, entries, spec: SplitSpec) -> Manifest:
    labels = [lab for _, lab in entries]
    train, _ = stratified_split_indices(labels, spec.train_fraction, spec.seed)
    in_train = set(train.tolist())
    rows = [(p, lab, "train" if i in in_train else "test") for i, (p, lab) in enumerate(entries)]
    return Manifest(list(class_names), rows)


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)
