#!/usr/bin/env python3
"""
SPSA in-situ fine-tuning of transferred phases on the crosstalk-perturbed hardware
"""

import argparse
import csv
import sys
from pathlib import Path
from typing import Dict, Optional

from utils.checkpoint import load_checkpoint, save_checkpoint
from utils.config import data_dir, load_config, load_environment, results_dir, split_seed
from utils.errors import CheckpointError
from utils.idx_loader import Dataset, load_mnist
from utils.network_layers import HardwareProfile, HardwareSimulator, NofuGlobals, build_network_spec
from utils.photonic_core import build_adjacency
from utils.spsa import FinetuneResult, SpsaConfig, finetune

TRACE_FIELDS = ["iteration", "train_loss_plus", "train_loss_minus", "test_acc", "skipped"]


class SpsaFineTuner:
    def __init__(self, config: Dict, seed: Optional[int] = None, progress: bool = True):
        self.config = config
        self.seed = config["seed"] if seed is None else seed
        self.progress = progress
        self.spsa = SpsaConfig.from_config(config, seed=split_seed(self.seed, "spsa"))
        self.xt = float(config["spsa"]["xt"])
        spec = build_network_spec()
        crosstalk = build_adjacency(spec.layout, self.xt, int(config["crosstalk"]["radius"]))
        self.hardware = HardwareSimulator(HardwareProfile.from_config(config),
                                          NofuGlobals.from_config(config), crosstalk, spec)

    def run(self, theta, train_set: Dataset, test_set: Dataset) -> FinetuneResult:
        print("=" * 60)
        print("SPSA in-situ fine-tuning")
        print("=" * 60)
        print(f"Crosstalk xt: {self.xt}")
        print(f"Iterations: {self.spsa.iterations}  batch: {self.spsa.batch}  "
              f"eta: {self.spsa.eta}  c: {self.spsa.c}")
        print(f"Multipliers: {self.spsa.multipliers}")

        result = finetune(theta, train_set, test_set, self.hardware, self.spsa,
                          s_scale=float(self.config["pretrain"]["s_scale"]), progress=self.progress)

        print(f"\nAccuracy before: {result.initial_accuracy * 100:.2f}%")
        print(f"Best accuracy:   {result.best_accuracy * 100:.2f}% (iteration {result.best_iteration})")
        print(f"Training forward passes: {result.forward_passes}")
        print(f"Evaluation forward passes: {result.eval_passes}")
        if result.skipped_steps:
            print(f"⚠️  {result.skipped_steps} steps skipped (non-finite gradient estimate)")
        return result

    @staticmethod
    def write_trace(path: Path, result: FinetuneResult) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
            writer.writeheader()
            for row in result.trace:
                writer.writerow({
                    "iteration": row.iteration,
                    "train_loss_plus": row.train_loss_plus,
                    "train_loss_minus": row.train_loss_minus,
                    "test_acc": "" if row.test_acc is None else row.test_acc,
                    "skipped": int(row.skipped),
                })
        return path


def main():
    parser = argparse.ArgumentParser(description="SPSA fine-tuning on the hardware simulator")
    parser.add_argument("checkpoint", help="Transferred phase checkpoint (.bin)")
    parser.add_argument("--config", type=str, help="YAML config file")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--iterations", type=int, help="Override spsa.iterations")
    parser.add_argument("--data-dir", type=str, help="Directory with MNIST IDX files")
    parser.add_argument("--train-subset", type=int, help="Use the first N training images")
    parser.add_argument("--test-subset", type=int, help="Use the first N test images")
    parser.add_argument("--out", type=str, help="Output directory")
    args = parser.parse_args()

    load_environment()
    config = load_config(args.config)
    if args.iterations is not None:
        config["spsa"]["iterations"] = args.iterations
    if args.data_dir:
        config["data"]["dir"] = args.data_dir
    try:
        theta = load_checkpoint(args.checkpoint, build_network_spec().n_params)
    except CheckpointError as exc:
        print(f"❌ {exc}")
        sys.exit(1)
    source = data_dir(config)
    train_set = load_mnist(source, "train", args.train_subset or config["data"]["train_subset"])
    test_set = load_mnist(source, "test", args.test_subset or config["data"]["test_subset"])

    tuner = SpsaFineTuner(config, args.seed)
    result = tuner.run(theta, train_set, test_set)
    out_dir = Path(args.out) if args.out else results_dir() / "finetune"
    save_checkpoint(out_dir / "theta_finetuned.bin", result.theta)
    tuner.write_trace(out_dir / "spsa_trace.csv", result)
    print(f"✅ Saved to {out_dir}")


if __name__ == "__main__":
    main()
