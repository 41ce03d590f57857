"""Datasets: the IDX binary image format and a Gaussian-blob generator.

The IDX parser is bit-exact about the classic layout: a 4-byte big-endian
magic (0x00000803 for image tensors, 0x00000801 for label vectors),
big-endian dimension sizes, then raw unsigned bytes. Every failure names
the byte offset it was detected at so a corrupt download is easy to
diagnose.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import substream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Flat supervised dataset: float64 rows in [0, 1]-ish scale, int labels."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if self.labels.ndim != 1 or len(self.labels) != len(self.inputs):
            raise ValueError(
                f"labels must be 1-D with one entry per row: {self.labels.shape} vs {self.inputs.shape}"
            )
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range [0, num_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[indices], self.labels[indices], self.num_classes)


def _read_exact(handle, count: int, path: Path, offset: int) -> bytes:
    blob = handle.read(count)
    if len(blob) != count:
        raise DataError(
            f"{path}: truncated at byte {offset}: expected {count} more bytes, found {len(blob)}"
        )
    return blob


def _read_be_u32(handle, path: Path, offset: int) -> int:
    return struct.unpack(">I", _read_exact(handle, 4, path, offset))[0]


def load_mnist_idx(images_path: str | Path, labels_path: str | Path, limit: int = 0) -> Dataset:
    """Load an IDX image/label file pair as a flattened float dataset.

    Pixels are scaled to [0, 1]. ``limit`` > 0 keeps only the first
    ``limit`` samples (after the files are validated in full).
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)

    with open(images_path, "rb") as f:
        magic = _read_be_u32(f, images_path, 0)
        if magic != IMAGE_MAGIC:
            raise DataError(
                f"{images_path}: bad magic 0x{magic:08x} at byte 0 (expected 0x{IMAGE_MAGIC:08x})"
            )
        count = _read_be_u32(f, images_path, 4)
        rows = _read_be_u32(f, images_path, 8)
        cols = _read_be_u32(f, images_path, 12)
        pixels = _read_exact(f, count * rows * cols, images_path, 16)
        trailing = f.read(1)
        if trailing:
            raise DataError(
                f"{images_path}: {count * rows * cols} pixel bytes expected after byte 16, file has more"
            )

    with open(labels_path, "rb") as f:
        magic = _read_be_u32(f, labels_path, 0)
        if magic != LABEL_MAGIC:
            raise DataError(
                f"{labels_path}: bad magic 0x{magic:08x} at byte 0 (expected 0x{LABEL_MAGIC:08x})"
            )
        label_count = _read_be_u32(f, labels_path, 4)
        raw_labels = _read_exact(f, label_count, labels_path, 8)
        trailing = f.read(1)
        if trailing:
            raise DataError(
                f"{labels_path}: {label_count} label bytes expected after byte 8, file has more"
            )

    if label_count != count:
        raise DataError(
            f"{labels_path}: {label_count} labels for {count} images in {images_path}"
        )

    inputs = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    inputs = inputs.reshape(count, rows * cols)
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataError(f"{labels_path}: label value {labels.max()} outside 0..9")

    if limit < 0:
        raise ValueError(f"limit must be >= 0, got {limit}")
    if limit:
        inputs, labels = inputs[:limit], labels[:limit]
    return Dataset(inputs, labels, num_classes=10)


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    """Write a uint8 [n, rows, cols] array in IDX image layout."""
    if images.ndim != 3 or images.dtype != np.uint8:
        raise ValueError("images must be uint8 with shape [n, rows, cols]")
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write a uint8 [n] array in IDX label layout."""
    if labels.ndim != 1 or labels.dtype != np.uint8:
        raise ValueError("labels must be a 1-D uint8 array")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def gen_synthetic(
    num_samples: int,
    num_classes: int,
    dim: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Gaussian blobs with unit covariance and equidistant class means.

    Means sit at ``separation / sqrt(2)`` along distinct coordinate axes,
    which puts every pair of class means exactly ``separation`` apart.
    Class counts are balanced to within one sample and the row order is a
    seeded shuffle, so the same seed always yields the same array bytes.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if dim < num_classes:
        raise ValueError(f"dim must be >= num_classes, got dim={dim} classes={num_classes}")
    if separation <= 0:
        raise ValueError(f"separation must be > 0, got {separation}")

    rng = substream(seed, "dataset", "synthetic")
    base, extra = divmod(num_samples, num_classes)
    counts = [base + (1 if c < extra else 0) for c in range(num_classes)]
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), counts)
    labels = labels[rng.permutation(num_samples)]

    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes)] = separation / np.sqrt(2.0)
    inputs = rng.standard_normal((num_samples, dim)) + means[labels]
    return Dataset(inputs, labels, num_classes=num_classes)
