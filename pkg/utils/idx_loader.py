"""MNIST IDX reader/writer.

Images: big-endian magic 0x00000803, u32 count, u32 rows, u32 cols, then
count*rows*cols unsigned bytes. Labels: magic 0x00000801, u32 count, then
count unsigned bytes. Files ending in .gz are decompressed transparently.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from utils.errors import DimensionError, IdxParseError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
IMAGE_SIDE = 28

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

PathLike = Union[str, Path]


@dataclass
class Dataset:
    images: np.ndarray  # (n, 28, 28) uint8
    labels: np.ndarray  # (n,) uint8

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if len(self.images) != len(self.labels):
            raise DimensionError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: Optional[int]) -> "Dataset":
        """First n items (all when n is None or larger than the dataset)."""
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n])


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def parse_images(data: bytes) -> np.ndarray:
    if len(data) < 16:
        raise IdxParseError(f"Image header needs 16 bytes, got {len(data)}", len(data))
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGES_MAGIC:
        raise IdxParseError(f"Bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}", 0)
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise IdxParseError(f"Images must be {IMAGE_SIDE}x{IMAGE_SIDE}, got {rows}x{cols}", 8)
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise IdxParseError(f"Expected {expected} bytes for {count} images, got {len(data)}",
                            min(len(data), expected))
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols).copy()


def parse_labels(data: bytes) -> np.ndarray:
    if len(data) < 8:
        raise IdxParseError(f"Label header needs 8 bytes, got {len(data)}", len(data))
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABELS_MAGIC:
        raise IdxParseError(f"Bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}", 0)
    expected = 8 + count
    if len(data) != expected:
        raise IdxParseError(f"Expected {expected} bytes for {count} labels, got {len(data)}",
                            min(len(data), expected))
    labels = np.frombuffer(data, dtype=np.uint8, offset=8).copy()
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise IdxParseError(f"Label {labels[bad]} is outside 0-9", 8 + bad)
    return labels


def load_idx(images_path: PathLike, labels_path: PathLike) -> Dataset:
    images = parse_images(_read_bytes(images_path))
    labels = parse_labels(_read_bytes(labels_path))
    if len(images) != len(labels):
        raise IdxParseError(f"Image count {len(images)} does not match label count {len(labels)}", 4)
    return Dataset(images, labels)


def encode_images(images) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    return struct.pack(">IIII", IMAGES_MAGIC, count, rows, cols) + images.tobytes()


def encode_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABELS_MAGIC, len(labels)) + labels.tobytes()


def save_idx(dataset: Dataset, images_path: PathLike, labels_path: PathLike) -> None:
    for path, payload in ((Path(images_path), encode_images(dataset.images)),
                          (Path(labels_path), encode_labels(dataset.labels))):
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".gz":
            with gzip.open(path, "wb") as f:
                f.write(payload)
        else:
            path.write_bytes(payload)


def find_mnist_files(data_dir: PathLike, split: str) -> Tuple[Path, Path]:
    """Locate the split's files, accepting the '-idx' and '.idx' spellings and .gz."""
    if split not in MNIST_FILES:
        raise ValueError(f"Unknown split: {split} (expected 'train' or 'test')")
    data_dir = Path(data_dir)
    found = []
    for name in MNIST_FILES[split]:
        stem, _, kind = name.rpartition("-idx")
        candidates = [f"{stem}-idx{kind}", f"{stem}.idx{kind}"]
        match = next((data_dir / (c + suffix) for c in candidates for suffix in ("", ".gz")
                      if (data_dir / (c + suffix)).exists()), None)
        if match is None:
            raise FileNotFoundError(f"No {name}[.gz] in {data_dir}")
        found.append(match)
    return found[0], found[1]


def load_mnist(data_dir: PathLike, split: str, limit: Optional[int] = None) -> Dataset:
    images_path, labels_path = find_mnist_files(data_dir, split)
    return load_idx(images_path, labels_path).subset(limit)
