#!/usr/bin/env python3
"""
Unified PCNN Command Line Tool
Pre-training, phase transfer, hardware evaluation, crosstalk sweeps,
SPSA fine-tuning, the performance model and the run history
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from evaluate_hardware import HardwareEvaluator, print_result
from finetune_spsa import SpsaFineTuner
from pretrain_twin import TwinTrainer
from show_runs import RunViewer
from utils.checkpoint import load_checkpoint, save_checkpoint, write_loss_curve
from utils.config import data_dir, load_config, load_environment, results_dir, split_seed
from utils.errors import ConfigError, PcnnError, TrainingDiverged
from utils.idx_loader import Dataset, load_mnist
from utils.network_layers import build_network_spec
from utils.perf_model import (
    PerfConfig,
    format_perf_tables,
    gpu_comparison,
    list_presets,
    perf_report,
    technology_table,
)
from utils.run_manifest import RUNS_LOG, RunRecorder
from utils.twin_model import mzi_parity, parity_check, transfer_phases

DESK_TRAIN_SUBSET = 10_000
DESK_TEST_SUBSET = 2_000
DESK_EPOCHS = 10


# --------------------------------------------------------------------------
# Shared plumbing
# --------------------------------------------------------------------------

def prepare(args) -> Tuple[Dict, int]:
    """Merged config with command-line overrides applied."""
    config = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "data_dir", None):
        config["data"]["dir"] = args.data_dir
    if getattr(args, "train_subset", None):
        config["data"]["train_subset"] = args.train_subset
    if getattr(args, "test_subset", None):
        config["data"]["test_subset"] = args.test_subset
    return config, int(config["seed"])


def recorder_for(args, command: str, config: Dict, seed: int) -> RunRecorder:
    out_dir = Path(args.out_dir) if getattr(args, "out_dir", None) else results_dir() / command
    return RunRecorder(command, config, seed, out_dir)


def load_split(config: Dict, split: str) -> Dataset:
    limit = config["data"]["train_subset" if split == "train" else "test_subset"]
    dataset = load_mnist(data_dir(config), split, limit)
    print(f"Loaded {len(dataset)} {split} images from {data_dir(config)}")
    return dataset


def require_checkpoint(args) -> Optional[np.ndarray]:
    if not getattr(args, "checkpoint", None):
        print("❌ checkpoint required (pass --checkpoint FILE.bin)")
        return None
    return load_checkpoint(args.checkpoint, build_network_spec().n_params)


def banner(title: str, config: Dict, seed: int):
    print("=" * 60)
    print(title)
    print("=" * 60)
    print(f"Seed: {seed}")
    if config["data"]["train_subset"] or config["data"]["test_subset"]:
        print(f"Subsets: train={config['data']['train_subset']} test={config['data']['test_subset']}")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def pretrain_command(args):
    config, seed = prepare(args)
    if getattr(args, "epochs", None):
        config["pretrain"]["epochs"] = args.epochs
    banner("PCNN twin pre-training", config, seed)
    train_set, test_set = load_split(config, "train"), load_split(config, "test")
    recorder = recorder_for(args, "pretrain", config, seed)

    trainer = TwinTrainer(config, seed)
    try:
        theta, records = trainer.train(train_set, test_set)
    except TrainingDiverged as exc:
        write_loss_curve(recorder.output("loss_curve.csv"), exc.records)
        recorder.metrics = {"epochs_completed": len(exc.records)}
        recorder.finish("failed", str(exc))
        print(f"❌ Training diverged: {exc}")
        return 1

    save_checkpoint(recorder.output("theta_twin.bin"), theta)
    write_loss_curve(recorder.output("loss_curve.csv"), records)
    best = max(records, key=lambda r: r.test_acc) if records else None
    recorder.metrics = {
        "epochs": len(records),
        "best_epoch": best.epoch if best else 0,
        "best_test_acc": best.test_acc if best else 0.0,
        "final_train_loss": records[-1].train_loss if records else None,
        "accuracy": best.test_acc if best else 0.0,
    }
    recorder.write_json("metrics.json", recorder.metrics)
    recorder.finish()
    print(f"\n📈 Best twin test accuracy: {recorder.metrics['best_test_acc'] * 100:.2f}% "
          f"(epoch {recorder.metrics['best_epoch']})")
    return 0


def transfer_command(args):
    config, seed = prepare(args)
    theta_twin = require_checkpoint(args)
    if theta_twin is None:
        return 2
    banner("Twin -> hardware phase transfer", config, seed)
    test_set = load_split(config, "test")
    recorder = recorder_for(args, "transfer", config, seed)
    evaluator = HardwareEvaluator(config, seed)

    theta_hw = transfer_phases(theta_twin)
    n_parity = min(int(config["parity"]["n_images"]), len(test_set))
    rng = np.random.default_rng(split_seed(seed, "sample"))
    sample = test_set.images[np.sort(rng.choice(len(test_set), size=n_parity, replace=False))]
    max_diff = parity_check(theta_hw, sample, hardware=evaluator.hardware(0.0))
    mzi_diff = mzi_parity(seed=split_seed(seed, "sample"), splitting_ratio=evaluator.profile.splitting_ratio)
    budget = float(config["parity"]["budget"])

    twin = evaluator.evaluate(theta_twin, test_set, mode="twin")
    hardware = evaluator.evaluate(theta_hw, test_set, mode="hardware", xt=0.0)
    gap = (twin.accuracy - hardware.accuracy) * 100

    print(f"\nParity over {n_parity} images: max |twin - hardware| = {max_diff:.3e} "
          f"{'✅' if max_diff < budget else '❌'}")
    print(f"MZI entry parity: {mzi_diff:.3e}")
    print(f"Twin accuracy:     {twin.accuracy * 100:.2f}%")
    print(f"Hardware accuracy: {hardware.accuracy * 100:.2f}%")
    print(f"Gap: {gap:.2f} pts {'✅' if abs(gap) < 5 else '⚠️'}")

    save_checkpoint(recorder.output("theta_hw.bin"), theta_hw)
    recorder.metrics = {
        "parity_max_diff": max_diff,
        "parity_ok": bool(max_diff < budget),
        "mzi_max_diff": mzi_diff,
        "twin_acc": twin.accuracy,
        "hardware_acc": hardware.accuracy,
        "gap_pts": gap,
        "within_5pts": bool(abs(gap) < 5),
    }
    recorder.write_json("metrics.json", recorder.metrics)
    recorder.finish("completed" if max_diff < budget else "failed")
    return 0 if max_diff < budget else 1


def eval_command(args):
    config, seed = prepare(args)
    theta = require_checkpoint(args)
    if theta is None:
        return 2
    xt = float(config["crosstalk"]["xt"] if args.xt is None else args.xt)
    banner(f"{args.mode.title()} evaluation (xt={xt:g})", config, seed)
    test_set = load_split(config, "test")
    recorder = recorder_for(args, "eval", config, seed)

    result = HardwareEvaluator(config, seed).evaluate(theta, test_set, args.mode, xt)
    print_result(result, f"{args.mode.upper()} EVALUATION")
    HardwareEvaluator.write_confusion(recorder.output("confusion.csv"), result)
    recorder.metrics = {**result.to_dict(), "mode": args.mode, "xt": xt}
    recorder.write_json("metrics.json", recorder.metrics)
    recorder.finish()
    return 0


def xtalk_sweep_command(args):
    config, seed = prepare(args)
    theta = require_checkpoint(args)
    if theta is None:
        return 2
    if args.xt_values:
        config["sweep"]["xt_values"] = list(args.xt_values)
    banner("Thermal crosstalk sweep", config, seed)
    test_set = load_split(config, "test")
    recorder = recorder_for(args, "xtalk-sweep", config, seed)

    evaluator = HardwareEvaluator(config, seed)
    rows = evaluator.xtalk_sweep(theta, test_set)
    monotonic = evaluator.is_monotonic(rows)
    print(f"\nDegradation trend: {'monotone ✅' if monotonic else 'non-monotone ⚠️'}")

    evaluator.write_sweep(recorder.output("xtalk_sweep.csv"), rows)
    recorder.metrics = {
        "rows": [{"xt": r.xt, "accuracy": r.accuracy, "drop": r.drop} for r in rows],
        "monotonic": monotonic,
        "max_drop": max((r.drop for r in rows), default=0.0),
    }
    recorder.write_json("metrics.json", recorder.metrics)
    recorder.finish()
    return 0


def finetune_command(args):
    config, seed = prepare(args)
    theta = require_checkpoint(args)
    if theta is None:
        return 2
    if args.iterations is not None:
        config["spsa"]["iterations"] = args.iterations
    if args.xt is not None:
        config["spsa"]["xt"] = args.xt
    train_set, test_set = load_split(config, "train"), load_split(config, "test")
    recorder = recorder_for(args, "finetune", config, seed)

    tuner = SpsaFineTuner(config, seed)
    result = tuner.run(theta, train_set, test_set)
    save_checkpoint(recorder.output("theta_finetuned.bin"), result.theta)
    tuner.write_trace(recorder.output("spsa_trace.csv"), result)
    recorder.metrics = {
        "xt": tuner.xt,
        "initial_accuracy": result.initial_accuracy,
        "best_accuracy": result.best_accuracy,
        "accuracy": result.best_accuracy,
        "best_iteration": result.best_iteration,
        "forward_passes": result.forward_passes,
        "eval_passes": result.eval_passes,
        "skipped_steps": result.skipped_steps,
    }
    recorder.write_json("metrics.json", recorder.metrics)
    recorder.finish()
    return 0


def perf_command(args):
    config, seed = prepare(args)
    if args.nops:
        config["perf"]["n_ops_mode"] = args.nops
    if args.preset:
        config["perf"]["preset"] = args.preset
    perf = PerfConfig.from_config(config)
    theta = load_checkpoint(args.checkpoint, build_network_spec().n_params) if args.checkpoint else None
    recorder = recorder_for(args, "perf", config, seed)

    report = perf_report(theta, config=perf)
    tech_rows = technology_table(theta, config=perf)
    gpu_rows = gpu_comparison(report)
    tables = format_perf_tables(report, tech_rows, gpu_rows)
    print(tables)

    with open(recorder.output("perf_tables.txt"), "w") as f:
        f.write(tables)
    recorder.metrics = {
        "n_ops_mode": perf.n_ops_mode,
        "heater_source": "checkpoint" if theta is not None else "reference",
        **report.to_dict(),
        "e_op_pj": report.e_op * 1e12,
        "technologies": [vars(row) for row in tech_rows],
        "gpu": [vars(row) for row in gpu_rows],
    }
    recorder.write_json("perf.json", recorder.metrics)
    recorder.finish()
    return 0


def runs_command(args):
    log_file = Path(args.log) if getattr(args, "log", None) else results_dir() / RUNS_LOG
    viewer = RunViewer(log_file)
    runs = viewer.load_runs()
    if not runs:
        print("No runs found.")
        print("Run an experiment first with:")
        print("  python pcnn.py desk")
        return 1
    if args.last:
        runs = runs[-args.last:]

    print("\n" + "=" * 60)
    print("PCNN RUN HISTORY")
    print("=" * 60)
    viewer.display_runs(runs, args.command_filter)
    if args.stats:
        viewer.show_statistics(runs)
    if args.trends:
        viewer.show_trends(runs)
    if args.export:
        viewer.export_to_csv(runs, args.export)

    failed = len([r for r in runs if r.get("status") == "failed"])
    print(f"\nSummary: {len(runs)} total runs, {failed} failed")
    return 0


def check_command(args):
    """Shortcut for run statistics and trends"""
    class CheckArgs:
        log = getattr(args, "log", None)
        stats = True
        trends = True
        export = None
        last = None
        command_filter = "all"
    return runs_command(CheckArgs())


def list_presets_command(args):
    print()
    print("Phase shifter technology presets")
    print("=" * 60)
    for line in list_presets():
        print(line)
    print()
    return 0


def desk_command(args):
    """Shortcut: desk-scale pre-training, transfer and hardware evaluation"""
    args.train_subset = getattr(args, "train_subset", None) or DESK_TRAIN_SUBSET
    args.test_subset = getattr(args, "test_subset", None) or DESK_TEST_SUBSET
    args.epochs = DESK_EPOCHS
    root = Path(args.out_dir) if getattr(args, "out_dir", None) else results_dir()

    args.out_dir = str(root / "desk_pretrain")
    status = pretrain_command(args)
    if status:
        return status
    args.checkpoint = str(root / "desk_pretrain" / "theta_twin.bin")
    args.out_dir = str(root / "desk_transfer")
    status = transfer_command(args)
    if status:
        return status
    args.checkpoint = str(root / "desk_transfer" / "theta_hw.bin")
    args.out_dir = str(root / "desk_eval")
    args.mode, args.xt = "hardware", None
    return eval_command(args)


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Unified PCNN Command Line Tool",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Desk-scale pipeline (10k/2k images, 10 epochs, then hardware eval)
  python pcnn.py desk

  # Full pre-training
  python pcnn.py pretrain --config configs/pcnn_default.yaml

  # Transfer and verify parity
  python pcnn.py transfer --checkpoint results/pretrain/theta_twin.bin

  # Hardware accuracy with crosstalk
  python pcnn.py eval --checkpoint results/transfer/theta_hw.bin --xt 0.1

  # Crosstalk sweep and SPSA recovery
  python pcnn.py xtalk-sweep --checkpoint results/transfer/theta_hw.bin
  python pcnn.py finetune --checkpoint results/transfer/theta_hw.bin --xt 0.1

  # Energy model with the reported operation count
  python pcnn.py perf --nops reported
        """
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="YAML config file")
    common.add_argument("--seed", type=int, help="Root seed")
    common.add_argument("--out-dir", type=str, help="Output directory")
    common.add_argument("--data-dir", type=str, help="Directory with MNIST IDX files")
    common.add_argument("--train-subset", type=int, metavar="N", help="Use the first N training images")
    common.add_argument("--test-subset", type=int, metavar="N", help="Use the first N test images")
    common.add_argument("--verbose", action="store_true", help="Log INFO messages")

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    pre = subparsers.add_parser("pretrain", parents=[common], help="Pre-train the digital twin")
    pre.add_argument("--epochs", type=int, help="Override pretrain.epochs")

    for name, help_text in (("transfer", "Transfer twin phases to hardware and verify parity"),
                            ("xtalk-sweep", "Hardware accuracy over crosstalk values")):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("--checkpoint", type=str, help="Phase checkpoint (.bin)")
        if name == "xtalk-sweep":
            sub.add_argument("--xt-values", type=float, nargs="+", help="Crosstalk grid")

    ev = subparsers.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    ev.add_argument("--checkpoint", type=str, help="Phase checkpoint (.bin)")
    ev.add_argument("--mode", choices=["hardware", "twin"], default="hardware")
    ev.add_argument("--xt", type=float, help="Crosstalk factor")

    ft = subparsers.add_parser("finetune", parents=[common], help="SPSA in-situ fine-tuning")
    ft.add_argument("--checkpoint", type=str, help="Transferred phase checkpoint (.bin)")
    ft.add_argument("--iterations", type=int, help="Override spsa.iterations")
    ft.add_argument("--xt", type=float, help="Crosstalk factor during fine-tuning")

    pf = subparsers.add_parser("perf", parents=[common], help="Latency, power and energy report")
    pf.add_argument("--nops", choices=["formula", "reported", "paper"],
                    help="Operation count source (paper is an alias of reported)")
    pf.add_argument("--preset", type=str, help="Phase shifter technology preset")
    pf.add_argument("--checkpoint", type=str, help="Trace heater power from these phases")

    runs = subparsers.add_parser("runs", help="View the run history")
    runs.add_argument("--log", type=str, help="Path to runs.log")
    runs.add_argument("--command", dest="command_filter", default="all", help="Only show one command")
    runs.add_argument("--stats", action="store_true", help="Show statistics")
    runs.add_argument("--trends", action="store_true", help="Show accuracy trends")
    runs.add_argument("--export", type=str, metavar="FILE.csv", help="Export to CSV")
    runs.add_argument("--last", type=int, metavar="N", help="Show only last N entries")

    check = subparsers.add_parser("check", help="Run statistics and trends")
    check.add_argument("--log", type=str, help="Path to runs.log")
    subparsers.add_parser("list-presets", help="List phase shifter technology presets")
    subparsers.add_parser("desk", parents=[common], help="Desk-scale pretrain + transfer + eval")
    return parser


COMMANDS = {
    "pretrain": pretrain_command,
    "transfer": transfer_command,
    "eval": eval_command,
    "xtalk-sweep": xtalk_sweep_command,
    "finetune": finetune_command,
    "perf": perf_command,
    "runs": runs_command,
    "check": check_command,
    "list-presets": list_presets_command,
    "desk": desk_command,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    load_environment()

    handler = COMMANDS.get(args.command)
    if handler is None:
        parser.print_help()
        return 2

    try:
        return handler(args)
    except ConfigError as exc:
        print(f"❌ Configuration error: {exc}")
        return 2
    except PcnnError as exc:
        print(f"❌ {exc}")
        return 1
    except FileNotFoundError as exc:
        print(f"❌ {exc}")
        print("Set PCNN_DATA_DIR or pass --data-dir to point at the MNIST IDX files.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
