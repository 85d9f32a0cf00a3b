#!/usr/bin/env python3
"""
Accuracy, confusion matrix and crosstalk sweeps for phase checkpoints
"""

import argparse
import csv
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.checkpoint import load_checkpoint
from utils.config import data_dir, load_config, load_environment, split_seed
from utils.errors import CheckpointError, ConfigError
from utils.idx_loader import Dataset, load_mnist
from utils.network_layers import (
    N_CLASSES,
    HardwareProfile,
    HardwareSimulator,
    NofuGlobals,
    build_network_spec,
    predict,
)
from utils.photonic_core import CrosstalkModel, build_adjacency


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows = true class, columns = predicted class
    per_class_acc: List[float]

    @classmethod
    def from_predictions(cls, labels, predictions) -> "EvalResult":
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        np.add.at(confusion, (labels, predictions), 1)
        total = int(confusion.sum())
        counts = confusion.sum(axis=1)
        per_class = [float(confusion[c, c] / counts[c]) if counts[c] else 0.0
                     for c in range(N_CLASSES)]
        acc = float(np.trace(confusion) / total) if total else 0.0
        return cls(acc, confusion, per_class)

    def to_dict(self) -> Dict:
        return {
            "accuracy": self.accuracy,
            "per_class_acc": self.per_class_acc,
            "confusion": self.confusion.tolist(),
            "n_images": int(self.confusion.sum()),
        }


@dataclass
class SweepRow:
    xt: float
    accuracy: float
    drop: float


def evaluate(theta, dataset: Dataset, mode: str = "hardware",
             crosstalk: Optional[CrosstalkModel] = None,
             profile: Optional[HardwareProfile] = None,
             nofu: Optional[NofuGlobals] = None,
             batch_size: int = 256, progress: bool = False) -> EvalResult:
    """Run the network on every image and tabulate predictions."""
    if mode == "hardware":
        scores = HardwareSimulator(profile, nofu, crosstalk).scores(theta, dataset.images,
                                                                     batch_size, progress)
    elif mode == "twin":
        if crosstalk is not None and crosstalk.xt != 0.0:
            logging.info("Twin evaluation ignores crosstalk (xt=%s)", crosstalk.xt)
        from utils.twin_model import PhotonicTwin
        scores = PhotonicTwin(profile, nofu).scores(theta, dataset.images, batch_size)
    else:
        raise ConfigError(f"Unknown evaluation mode: {mode} (expected 'twin' or 'hardware')")
    return EvalResult.from_predictions(dataset.labels, predict(scores))


class HardwareEvaluator:
    """Evaluates checkpoints under the configured hardware profile and crosstalk."""

    def __init__(self, config: Dict, seed: Optional[int] = None, progress: bool = True):
        self.config = config
        self.seed = config["seed"] if seed is None else seed
        self.progress = progress
        self.profile = HardwareProfile.from_config(config)
        self.nofu = NofuGlobals.from_config(config)
        self.layout = build_network_spec().layout

    def crosstalk(self, xt: Optional[float] = None) -> Optional[CrosstalkModel]:
        xt = float(self.config["crosstalk"]["xt"] if xt is None else xt)
        if xt == 0.0:
            return None
        return build_adjacency(self.layout, xt, int(self.config["crosstalk"]["radius"]))

    def hardware(self, xt: Optional[float] = None) -> HardwareSimulator:
        return HardwareSimulator(self.profile, self.nofu, self.crosstalk(xt))

    def evaluate(self, theta, dataset: Dataset, mode: str = "hardware",
                 xt: Optional[float] = None) -> EvalResult:
        return evaluate(theta, dataset, mode, self.crosstalk(xt) if mode == "hardware" else None,
                        self.profile, self.nofu, progress=self.progress)

    def sweep_subset(self, dataset: Dataset) -> Dataset:
        size = self.config["sweep"]["subset"]
        if size is None or size >= len(dataset):
            return dataset
        rng = np.random.default_rng(split_seed(self.seed, "sweep"))
        picked = np.sort(rng.choice(len(dataset), size=int(size), replace=False))
        return Dataset(dataset.images[picked], dataset.labels[picked])

    def xtalk_sweep(self, theta, dataset: Dataset,
                    xt_values: Optional[Sequence[float]] = None) -> List[SweepRow]:
        """Hardware accuracy per xt; drop is measured against xt = 0 on the same images."""
        xt_values = list(self.config["sweep"]["xt_values"] if xt_values is None else xt_values)
        if any(xt < 0 for xt in xt_values):
            raise ConfigError(f"Crosstalk values must be non-negative: {xt_values}")
        dataset = self.sweep_subset(dataset)
        baseline = self.evaluate(theta, dataset, xt=0.0).accuracy
        rows = []
        for xt in xt_values:
            acc = baseline if xt == 0.0 else self.evaluate(theta, dataset, xt=xt).accuracy
            rows.append(SweepRow(float(xt), acc, baseline - acc))
            print(f"  xt={xt:<6g} accuracy {acc * 100:6.2f}%  drop {(baseline - acc) * 100:5.2f} pts")
        return rows

    @staticmethod
    def is_monotonic(rows: Sequence[SweepRow]) -> bool:
        """True when accuracy never rises as xt grows."""
        ordered = sorted(rows, key=lambda r: r.xt)
        return all(b.accuracy <= a.accuracy for a, b in zip(ordered, ordered[1:]))

    @staticmethod
    def write_confusion(path: Path, result: EvalResult) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["true\\pred"] + [str(c) for c in range(N_CLASSES)])
            for c in range(N_CLASSES):
                writer.writerow([c] + [int(v) for v in result.confusion[c]])
        return path

    @staticmethod
    def write_sweep(path: Path, rows: Sequence[SweepRow]) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["xt", "accuracy", "drop"])
            writer.writeheader()
            for row in rows:
                writer.writerow({"xt": row.xt, "accuracy": row.accuracy, "drop": row.drop})
        return path


def print_result(result: EvalResult, title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)
    print(f"Accuracy: {result.accuracy * 100:.2f}% on {int(result.confusion.sum())} images")
    print("Per-class: " + "  ".join(f"{c}:{acc * 100:.1f}%" for c, acc in enumerate(result.per_class_acc)))


def main():
    parser = argparse.ArgumentParser(description="Evaluate a phase checkpoint on the hardware simulator")
    parser.add_argument("checkpoint", nargs="?", help="Phase checkpoint (.bin)")
    parser.add_argument("--config", type=str, help="YAML config file")
    parser.add_argument("--mode", choices=["hardware", "twin"], default="hardware")
    parser.add_argument("--xt", type=float, help="Crosstalk factor (overrides crosstalk.xt)")
    parser.add_argument("--sweep", action="store_true", help="Run the crosstalk sweep instead")
    parser.add_argument("--data-dir", type=str, help="Directory with MNIST IDX files")
    parser.add_argument("--test-subset", type=int, help="Use the first N test images")
    parser.add_argument("--confusion", type=str, metavar="FILE.csv", help="Write the confusion matrix")
    args = parser.parse_args()

    if not args.checkpoint:
        print("❌ checkpoint required")
        sys.exit(2)

    load_environment()
    config = load_config(args.config)
    if args.data_dir:
        config["data"]["dir"] = args.data_dir
    try:
        theta = load_checkpoint(args.checkpoint, build_network_spec().n_params)
    except CheckpointError as exc:
        print(f"❌ {exc}")
        sys.exit(1)
    test_set = load_mnist(data_dir(config), "test", args.test_subset or config["data"]["test_subset"])

    evaluator = HardwareEvaluator(config)
    if args.sweep:
        rows = evaluator.xtalk_sweep(theta, test_set)
        trend = "monotone" if evaluator.is_monotonic(rows) else "non-monotone"
        print(f"\nDegradation trend: {trend}")
        return

    result = evaluator.evaluate(theta, test_set, args.mode, args.xt)
    print_result(result, f"{args.mode.upper()} EVALUATION")
    if args.confusion:
        evaluator.write_confusion(Path(args.confusion), result)
        print(f"✅ Confusion matrix written to {args.confusion}")


if __name__ == "__main__":
    main()
