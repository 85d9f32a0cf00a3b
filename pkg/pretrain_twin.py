#!/usr/bin/env python3
"""
Ex-situ pre-training of the PCNN digital twin with backpropagation
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from tqdm import tqdm

from utils.checkpoint import save_checkpoint, write_loss_curve
from utils.config import data_dir, load_config, load_environment, results_dir, split_seed
from utils.errors import ConfigError, InputError, NumericError, TrainingDiverged
from utils.idx_loader import Dataset, load_mnist
from utils.network_layers import HardwareProfile, NofuGlobals, accuracy, init_phases
from utils.twin_model import LossRecord, PhotonicTwin, cross_entropy


class TwinTrainer:
    """Mini-batch training of all 2,132 phases through the twin."""

    def __init__(self, config: Dict, seed: Optional[int] = None, progress: bool = True):
        self.config = config
        self.settings = config["pretrain"]
        self.seed = config["seed"] if seed is None else seed
        self.progress = progress
        self.nofu = NofuGlobals.from_config(config)
        self.twin = PhotonicTwin(HardwareProfile.from_config(config), self.nofu,
                                 s_scale=float(self.settings["s_scale"]))

    def make_optimizer(self, theta: torch.nn.Parameter) -> torch.optim.Optimizer:
        name = str(self.settings["optimizer"]).lower()
        lr = float(self.settings["lr"])
        if name == "adam":
            beta1, beta2 = self.settings["betas"]
            return torch.optim.Adam([theta], lr=lr, betas=(float(beta1), float(beta2)),
                                    eps=float(self.settings["eps"]))
        if name == "sgd":
            return torch.optim.SGD([theta], lr=lr, momentum=float(self.settings["momentum"]))
        raise ConfigError(f"Unknown optimizer: {name} (expected 'adam' or 'sgd')")

    def test_accuracy(self, theta: np.ndarray, dataset: Dataset) -> float:
        return accuracy(self.twin.scores(theta, dataset.images), dataset.labels)

    def train(self, train_set: Dataset, test_set: Dataset,
              theta0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, List[LossRecord]]:
        """Returns the best test-accuracy phases and one record per epoch."""
        if len(train_set) == 0 or len(test_set) == 0:
            raise InputError("Pre-training needs non-empty train and test sets")
        epochs = int(self.settings["epochs"])
        batch = int(self.settings["batch"])

        if theta0 is None:
            theta0 = init_phases(split_seed(self.seed, "init"), nofu=self.nofu)
        theta = torch.nn.Parameter(torch.tensor(np.asarray(theta0, dtype=np.float64)))
        optimizer = self.make_optimizer(theta)
        shuffle = np.random.default_rng(split_seed(self.seed, "shuffle"))

        records: List[LossRecord] = []
        best_theta = theta.detach().numpy().copy()
        best_acc = -1.0
        n = len(train_set)

        for epoch in range(1, epochs + 1):
            order = shuffle.permutation(n)
            total_loss, correct = 0.0, 0
            batches = range(0, n, batch)
            if self.progress:
                batches = tqdm(batches, desc=f"Epoch {epoch}/{epochs}", unit="batch", leave=False)
            for start in batches:
                picked = order[start:start + batch]
                images = torch.as_tensor(train_set.images[picked])
                labels = torch.as_tensor(train_set.labels[picked].astype(np.int64))

                optimizer.zero_grad()
                try:
                    scores = self.twin.forward(theta, images)
                except NumericError as exc:
                    raise TrainingDiverged(f"Epoch {epoch}: {exc}", records) from exc
                loss = cross_entropy(scores, labels, self.twin.s_scale)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"Loss became NaN at epoch {epoch}, batch {start // batch}",
                                           records)
                loss.backward()
                optimizer.step()

                total_loss += loss.item() * len(picked)
                correct += int((scores.detach().argmax(dim=-1) == labels).sum())

            current = theta.detach().numpy().copy()
            test_acc = self.test_accuracy(current, test_set)
            record = LossRecord(epoch, total_loss / n, correct / n, test_acc)
            records.append(record)
            print(f"Epoch {epoch:>3}/{epochs}: loss {record.train_loss:.4f}  "
                  f"train {record.train_acc * 100:.2f}%  test {record.test_acc * 100:.2f}%")
            if test_acc > best_acc:
                best_theta, best_acc = current, test_acc

        return best_theta, records


def pretrain(train_set: Dataset, test_set: Dataset, config: Optional[Dict] = None,
             seed: Optional[int] = None, progress: bool = False):
    """Functional entry point: (best theta, loss records)."""
    return TwinTrainer(config or load_config(), seed, progress).train(train_set, test_set)


def main():
    parser = argparse.ArgumentParser(description="Pre-train the PCNN digital twin")
    parser.add_argument("--config", type=str, help="YAML config file")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--epochs", type=int, help="Override pretrain.epochs")
    parser.add_argument("--data-dir", type=str, help="Directory with MNIST IDX files")
    parser.add_argument("--train-subset", type=int, help="Use the first N training images")
    parser.add_argument("--test-subset", type=int, help="Use the first N test images")
    parser.add_argument("--out", type=str, help="Output directory")
    args = parser.parse_args()

    load_environment()
    config = load_config(args.config)
    if args.epochs:
        config["pretrain"]["epochs"] = args.epochs
    if args.data_dir:
        config["data"]["dir"] = args.data_dir
    source = data_dir(config)
    train_set = load_mnist(source, "train", args.train_subset or config["data"]["train_subset"])
    test_set = load_mnist(source, "test", args.test_subset or config["data"]["test_subset"])

    trainer = TwinTrainer(config, args.seed)
    try:
        theta, records = trainer.train(train_set, test_set)
    except TrainingDiverged as exc:
        print(f"❌ {exc} after {len(exc.records)} completed epochs")
        sys.exit(1)

    out_dir = Path(args.out) if args.out else results_dir() / "pretrain"
    save_checkpoint(out_dir / "theta_twin.bin", theta)
    write_loss_curve(out_dir / "loss_curve.csv", records)
    print(f"✅ Best test accuracy {max((r.test_acc for r in records), default=0.0) * 100:.2f}%; saved to {out_dir}")


if __name__ == "__main__":
    main()
