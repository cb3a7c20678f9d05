"""Digit datasets: IDX file ingestion and an offline synthetic substitute."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IdxFormatError
from .seeding import make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

IMAGE_SIDE = 28
N_PIXELS = IMAGE_SIDE * IMAGE_SIDE


@dataclass
class Dataset:
    """Flattened digit images in [0, 1] with integer class labels."""

    images: np.ndarray  # [n, 784] float
    labels: np.ndarray  # [n] int
    split: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or self.images.shape[1] != N_PIXELS:
            raise ConfigurationError(f"images must be [n, {N_PIXELS}], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ConfigurationError("label count does not match image count")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ConfigurationError("image values must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ConfigurationError("labels must lie in 0..9")

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.split)


def _read_exact(f, n: int, path: str, field: str, offset: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxFormatError(
            f"{path}: truncated while reading {field} at byte {offset} "
            f"(wanted {n} bytes, got {len(data)})"
        )
    return data


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Parse the big-endian IDX pair used by the standard MNIST distribution.

    Validates the magic numbers, dimensions, and byte counts; errors name the
    offending field and byte offset.
    """
    images_path, labels_path = str(images_path), str(labels_path)

    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(
            ">iiii", _read_exact(f, 16, images_path, "image header", 0)
        )
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(
                f"{images_path}: bad image magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IMAGE_MAGIC:08x}"
            )
        if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
            raise IdxFormatError(
                f"{images_path}: unsupported image dims {rows}x{cols} at byte 8"
            )
        raw = _read_exact(f, n * rows * cols, images_path, "pixel data", 16)
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)

    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(
            ">ii", _read_exact(f, 8, labels_path, "label header", 0)
        )
        if magic != LABEL_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x} at byte 0, "
                f"expected 0x{LABEL_MAGIC:08x}"
            )
        raw = _read_exact(f, n_labels, labels_path, "label data", 8)
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n != n_labels:
        raise IdxFormatError(
            f"count mismatch: {n} images in {images_path} vs {n_labels} labels in {labels_path}"
        )
    return Dataset(images=pixels / 255.0, labels=labels, split="idx")


# ---------------------------------------------------------------------------
# Synthetic digits: seven-segment style strokes on a 28x28 canvas.

# Segment extents (row0, row1, col0, col1).  Strokes are kept 2 px thin so
# related digits overlap heavily and noise produces genuinely ambiguous
# samples instead of a trivially separable task.
_SEGMENTS = {
    "top": (4, 6, 9, 19),
    "mid": (13, 15, 9, 19),
    "bot": (22, 24, 9, 19),
    "tl": (6, 14, 8, 10),
    "tr": (6, 14, 18, 20),
    "bl": (14, 22, 8, 10),
    "br": (14, 22, 18, 20),
}

_DIGIT_SEGMENTS = (
    ("top", "tl", "tr", "bl", "br", "bot"),        # 0
    ("tr", "br"),                                  # 1
    ("top", "tr", "mid", "bl", "bot"),             # 2
    ("top", "tr", "mid", "br", "bot"),             # 3
    ("tl", "tr", "mid", "br"),                     # 4
    ("top", "tl", "mid", "br", "bot"),             # 5
    ("top", "tl", "mid", "bl", "br", "bot"),       # 6
    ("top", "tr", "br"),                           # 7
    ("top", "tl", "tr", "mid", "bl", "br", "bot"), # 8
    ("top", "tl", "tr", "mid", "br", "bot"),       # 9
)


def digit_templates() -> np.ndarray:
    """The ten noise-free stroke templates, shape [10, 784]."""
    out = np.zeros((10, IMAGE_SIDE, IMAGE_SIDE))
    for digit, segs in enumerate(_DIGIT_SEGMENTS):
        for name in segs:
            r0, r1, c0, c1 = _SEGMENTS[name]
            out[digit, r0:r1, c0:c1] = 1.0
    return out.reshape(10, N_PIXELS)


def synthetic_digits(n_per_class: int, noise: float, seed: int) -> Dataset:
    """Stroke templates plus Gaussian pixel noise, clamped to [0, 1].

    Deterministic per seed; class order is shuffled so mini-batches are
    balanced without any further handling.
    """
    if n_per_class < 1:
        raise ConfigurationError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = make_rng(seed)
    templates = digit_templates()
    labels = np.repeat(np.arange(10), n_per_class)
    images = templates[labels]
    if noise > 0:
        images = np.clip(images + rng.normal(0.0, noise, size=images.shape), 0.0, 1.0)
    order = rng.permutation(len(labels))
    return Dataset(images=images[order], labels=labels[order], split="synthetic")
