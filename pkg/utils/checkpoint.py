"""Phase checkpoints and loss-curve CSV files.

Checkpoint layout (little-endian): b"PCNN", u32 version, u64 count, then
count float64 values.
"""

import csv
import struct
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np

from utils.errors import CheckpointError

MAGIC = b"PCNN"
VERSION = 1
HEADER = struct.Struct("<4sIQ")
LOSS_CURVE_FIELDS = ["epoch", "train_loss", "train_acc", "test_acc"]

PathLike = Union[str, Path]


def encode_checkpoint(theta) -> bytes:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise CheckpointError(f"Checkpoint holds a flat phase vector, got shape {theta.shape}")
    return HEADER.pack(MAGIC, VERSION, theta.size) + theta.astype("<f8").tobytes()


def decode_checkpoint(data: bytes, expected_count: Optional[int] = None) -> np.ndarray:
    if len(data) < HEADER.size:
        raise CheckpointError(f"Checkpoint header needs {HEADER.size} bytes, got {len(data)}")
    magic, version, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"Bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    if expected_count is not None and count != expected_count:
        raise CheckpointError(f"Checkpoint holds {count} phases, expected {expected_count}")
    body = len(data) - HEADER.size
    if body != 8 * count:
        raise CheckpointError(f"Checkpoint body has {body} bytes, expected {8 * count}")
    return np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)


def save_checkpoint(path: PathLike, theta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(theta))
    return path


def load_checkpoint(path: PathLike, expected_count: Optional[int] = None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), expected_count)


def write_loss_curve(path: PathLike, records: Iterable) -> Path:
    """One row per LossRecord-like object (epoch, train_loss, train_acc, test_acc)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOSS_CURVE_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow({name: getattr(record, name) for name in LOSS_CURVE_FIELDS})
    return path


def read_loss_curve(path: PathLike) -> List[dict]:
    with open(path, newline="") as f:
        return [{"epoch": int(row["epoch"]),
                 "train_loss": float(row["train_loss"]),
                 "train_acc": float(row["train_acc"]),
                 "test_acc": float(row["test_acc"])} for row in csv.DictReader(f)]
