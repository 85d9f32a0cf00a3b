#!/usr/bin/env python3
"""
Run history viewer for PCNN experiments
Shows every logged command with its headline metrics, statistics and trends
"""

import argparse
import csv
from pathlib import Path
from typing import Dict, List, Optional

import jsonlines

from utils.config import results_dir
from utils.run_manifest import RUNS_LOG

HEADLINE_METRICS = ("accuracy", "best_test_acc", "hardware_acc", "best_accuracy", "e_op_pj")


def headline(entry: Dict) -> str:
    metrics = entry.get("metrics", {}) or {}
    for key in HEADLINE_METRICS:
        value = metrics.get(key)
        if isinstance(value, (int, float)):
            return f"{key}={value:.4g}"
    return "-"


class RunViewer:
    def __init__(self, log_file: Optional[Path] = None):
        self.log_file = Path(log_file) if log_file else results_dir() / RUNS_LOG

    def load_runs(self) -> List[Dict]:
        """Load all entries from the run log"""
        if not self.log_file.exists():
            print(f"No log file found at {self.log_file}")
            return []

        runs = []
        with jsonlines.open(self.log_file) as reader:
            for entry in reader.iter(skip_invalid=True):
                if isinstance(entry, dict):
                    runs.append(entry)
                else:
                    print(f"Warning: Skipping non-object entry: {entry!r}")
        return runs

    def display_runs(self, runs: List[Dict], command: str = "all"):
        if command != "all":
            runs = [r for r in runs if r.get("command") == command]
        if not runs:
            print("No runs to display.")
            return

        print("\n" + "=" * 100)
        print(f"{'Timestamp':<20} {'Command':<12} {'Seed':>6} {'Status':<12} {'Headline':<28} {'Output'}")
        print("=" * 100)
        for entry in runs:
            status = entry.get("status", "unknown")
            if status == "completed":
                status_str = "✓ Completed"
            elif status == "failed":
                status_str = "✗ Failed"
            else:
                status_str = "? " + status[:10]
            print(f"{entry.get('timestamp', 'Unknown')[:19]:<20} {entry.get('command', '?'):<12} "
                  f"{entry.get('seed', '-'):>6} {status_str:<12} {headline(entry):<28} "
                  f"{Path(entry.get('out_dir', '-')).name}")
        print("=" * 100)

    def show_statistics(self, runs: List[Dict]):
        if not runs:
            return
        completed = [r for r in runs if r.get("status") == "completed"]
        failed = [r for r in runs if r.get("status") == "failed"]

        print("\n" + "=" * 60)
        print("STATISTICS")
        print("=" * 60)
        print(f"Total runs: {len(runs)}")
        print(f"  - Completed: {len(completed)}")
        print(f"  - Failed: {len(failed)}")

        by_command: Dict[str, List[Dict]] = {}
        for entry in completed:
            by_command.setdefault(entry.get("command", "?"), []).append(entry)
        for command, entries in sorted(by_command.items()):
            accs = [e["metrics"]["accuracy"] for e in entries
                    if isinstance(e.get("metrics", {}).get("accuracy"), (int, float))]
            print(f"\n{command}: {len(entries)} completed")
            if accs:
                print(f"  Accuracy average: {sum(accs) / len(accs) * 100:.2f}%")
                print(f"  Min: {min(accs) * 100:.2f}%")
                print(f"  Max: {max(accs) * 100:.2f}%")
            else:
                print("  No accuracy recorded.")

        hashes = {r.get("config_hash") for r in runs if r.get("config_hash")}
        print(f"\nDistinct configurations: {len(hashes)}")

    def show_trends(self, runs: List[Dict], command: str = "eval"):
        scored = [r for r in runs if r.get("command") == command and r.get("status") == "completed"
                  and isinstance(r.get("metrics", {}).get("accuracy"), (int, float))]
        if len(scored) < 2:
            return
        scored.sort(key=lambda r: r.get("timestamp", ""))
        print("\n" + "=" * 60)
        print(f"TRENDS ({command} runs)")
        print("=" * 60)
        for entry in scored[-10:]:
            print(f"  {entry.get('timestamp', 'Unknown')[:10]}: {entry['metrics']['accuracy'] * 100:6.2f}%")
        change = scored[-1]["metrics"]["accuracy"] - scored[0]["metrics"]["accuracy"]
        if change > 0:
            print(f"\n📈 Improving: +{change * 100:.2f} pts since the first run")
        elif change < 0:
            print(f"\n📉 Declining: {change * 100:.2f} pts since the first run")
        else:
            print("\n➡️  Stable accuracy")

    def export_to_csv(self, runs: List[Dict], filename: str):
        if not runs:
            print("No runs to export.")
            return
        fieldnames = ["timestamp", "command", "seed", "config_hash", "status", "out_dir", "headline", "notes"]
        with open(filename, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            for entry in runs:
                row = {k: entry.get(k, "") for k in fieldnames}
                row["headline"] = headline(entry)
                writer.writerow(row)
        print(f"\n✅ Exported {len(runs)} entries to {filename}")


def main():
    parser = argparse.ArgumentParser(description="View the PCNN run history")
    parser.add_argument("--log", type=str, help="Path to runs.log")
    parser.add_argument("--command", type=str, default="all", help="Only show one command")
    parser.add_argument("--stats", action="store_true", help="Show statistics")
    parser.add_argument("--trends", action="store_true", help="Show accuracy trends of eval runs")
    parser.add_argument("--export", type=str, metavar="FILE.csv", help="Export to CSV")
    parser.add_argument("--last", type=int, metavar="N", help="Show only last N entries")
    args = parser.parse_args()

    viewer = RunViewer(args.log)
    runs = viewer.load_runs()
    if args.last:
        runs = runs[-args.last:]
    viewer.display_runs(runs, args.command)
    if args.stats:
        viewer.show_statistics(runs)
    if args.trends:
        viewer.show_trends(runs)
    if args.export:
        viewer.export_to_csv(runs, args.export)


if __name__ == "__main__":
    main()
