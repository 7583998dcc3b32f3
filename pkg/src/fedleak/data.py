"""Dataset ingestion and preprocessing.

Reads IDX image/label files (the MNIST family) and CIFAR-10 binary batches,
converts everything to 1x28x28 grayscale tensors in [-1, 1], and partitions
training data so each client owns exactly one class.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, ParseError
from .tensor import DTYPE, Tensor

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 pixel bytes
NUM_DATA_CLASSES = 10


@dataclass(frozen=True)
class LabeledImage:
    """A preprocessed sample: (1, 28, 28) pixels in [-1, 1] plus its class."""

    pixels: Tensor
    label: int


@dataclass
class Partition:
    """One client's private slice of the training data, all of a single class."""

    owner_class: int
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)


def _read_file(path) -> bytes:
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise DataError(f"dataset file not found: {path}")
    blob = path.read_bytes()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return blob


def load_idx_images(path) -> np.ndarray:
    """Parse an IDX image file into a (count, rows, cols) uint8 array."""
    blob = _read_file(path)
    if len(blob) < 16:
        raise ParseError(f"IDX image header needs 16 bytes, file has {len(blob)}",
                         offset=len(blob))
    magic, count, rows, cols = struct.unpack_from(">IIII", blob, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise ParseError(f"bad IDX image magic 0x{magic:08x} "
                         f"(expected 0x{IDX_IMAGE_MAGIC:08x})", offset=0)
    expected = count * rows * cols
    actual = len(blob) - 16
    if actual != expected:
        raise ParseError(f"IDX image payload: expected {expected} bytes for "
                         f"{count} images of {rows}x{cols}, got {actual}",
                         offset=16 + min(actual, expected))
    return np.frombuffer(blob, np.uint8, offset=16).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """Parse an IDX label file into a (count,) uint8 array."""
    blob = _read_file(path)
    if len(blob) < 8:
        raise ParseError(f"IDX label header needs 8 bytes, file has {len(blob)}",
                         offset=len(blob))
    magic, count = struct.unpack_from(">II", blob, 0)
    if magic != IDX_LABEL_MAGIC:
        raise ParseError(f"bad IDX label magic 0x{magic:08x} "
                         f"(expected 0x{IDX_LABEL_MAGIC:08x})", offset=0)
    actual = len(blob) - 8
    if actual != count:
        raise ParseError(f"IDX label payload: expected {count} bytes, got {actual}",
                         offset=8 + min(actual, count))
    labels = np.frombuffer(blob, np.uint8, offset=8)
    bad = np.nonzero(labels >= NUM_DATA_CLASSES)[0]
    if bad.size:
        i = int(bad[0])
        raise ParseError(f"label byte {labels[i]} out of range at record {i}",
                         offset=8 + i)
    return labels


def load_cifar10(paths) -> list:
    """Parse CIFAR-10 binary batches into a list of (label, 3x32x32 bytes)."""
    records = []
    for path in paths:
        blob = _read_file(path)
        if len(blob) % CIFAR_RECORD != 0:
            raise ParseError(f"{path}: size {len(blob)} is not a multiple of "
                             f"{CIFAR_RECORD}",
                             offset=(len(blob) // CIFAR_RECORD) * CIFAR_RECORD)
        arr = np.frombuffer(blob, np.uint8).reshape(-1, CIFAR_RECORD)
        labels = arr[:, 0]
        bad = np.nonzero(labels >= NUM_DATA_CLASSES)[0]
        if bad.size:
            i = int(bad[0])
            raise ParseError(f"{path}: label byte {labels[i]} out of range at "
                             f"record {i}", offset=i * CIFAR_RECORD)
        for i in range(arr.shape[0]):
            records.append((int(labels[i]), arr[i, 1:].reshape(3, 32, 32)))
    return records


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resampling; constant images stay constant."""
    in_h, in_w = img.shape
    img = img.astype(np.float64)

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_coords(out_h, in_h)
    x0, x1, wx = axis_coords(out_w, in_w)
    rows = img[y0] + wy[:, None] * (img[y1] - img[y0])
    out = rows[:, x0] + wx[None, :] * (rows[:, x1] - rows[:, x0])
    return out


def grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B, exact on gray inputs."""
    r, g, b = rgb[0].astype(np.float64), rgb[1].astype(np.float64), rgb[2].astype(np.float64)
    return (299.0 * r + 587.0 * g + 114.0 * b) / 1000.0


def preprocess(raw) -> Tensor:
    """Map a raw image to a (1, 28, 28) float32 tensor in [-1, 1].

    28x28 grayscale bytes scale linearly (0 -> -1, 255 -> +1); 3x32x32 RGB
    bytes are converted to luma and bilinearly resized to 28x28 first.
    """
    a = np.asarray(raw)
    if a.shape == (28, 28):
        pix = a.astype(DTYPE)
    elif a.shape == (3, 32, 32):
        pix = _resize_bilinear(grayscale(a), 28, 28).astype(DTYPE)
    else:
        raise DimensionError(f"expected 28x28 grayscale or 3x32x32 RGB bytes, "
                             f"got shape {a.shape}")
    scaled = pix / DTYPE(127.5) - DTYPE(1.0)
    return Tensor((1, 28, 28), scaled)


def partition_by_class(dataset, samples_per_class: int,
                       rng: np.random.Generator) -> dict:
    """Split labeled images into per-class partitions of a fixed size.

    Selection is a seeded shuffle within each class; partitions are disjoint.
    Raises DataError naming the first class that cannot fill its quota.
    """
    by_class = {}
    for i, sample in enumerate(dataset):
        by_class.setdefault(sample.label, []).append(i)
    partitions = {}
    for c in sorted(by_class):
        pool = by_class[c]
        if len(pool) < samples_per_class:
            raise DataError(f"class {c} has {len(pool)} samples, "
                            f"need {samples_per_class}")
        order = rng.permutation(len(pool))[:samples_per_class]
        partitions[c] = Partition(c, [dataset[pool[k]] for k in order])
    return partitions


# ---------------------------------------------------------------------------
# whole-dataset assembly for the experiment runner

IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


def _dataset_root(name: str, data_dir) -> Path:
    root = Path(data_dir)
    nested = root / name
    if nested.is_dir():
        return nested
    return root


def _load_idx_split(root: Path, split: str) -> list:
    image_file, label_file = IDX_FILES[split]
    images = load_idx_images(root / image_file)
    labels = load_idx_labels(root / label_file)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(f"{root}: {images.shape[0]} images but "
                         f"{labels.shape[0]} labels", offset=0)
    return [LabeledImage(preprocess(img), int(lbl))
            for img, lbl in zip(images, labels)]


def _load_cifar_split(root: Path, split: str) -> list:
    records = load_cifar10([root / f for f in CIFAR_FILES[split]])
    return [LabeledImage(preprocess(rgb), label) for label, rgb in records]


def load_dataset(name: str, data_dir):
    """Load a named dataset's (train, test) lists of LabeledImage."""
    if name in ("mnist", "fashion_mnist"):
        root = _dataset_root(name, data_dir)
        return _load_idx_split(root, "train"), _load_idx_split(root, "test")
    if name == "cifar10":
        root = _dataset_root(name, data_dir)
        return _load_cifar_split(root, "train"), _load_cifar_split(root, "test")
    raise DataError(f"unknown dataset {name!r}")
