"""Per-run manifest.json and the append-only runs.log history."""

from datetime import datetime
import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Union

# Runs without a git executable still get a manifest.
os.environ.setdefault("GIT_PYTHON_REFRESH", "quiet")

import git  # noqa: E402
import jsonlines

from utils.config import config_hash

RUNS_LOG = "runs.log"


def git_describe(path: Union[str, Path, None] = None) -> str:
    """`git describe --always --dirty` of the source tree, or 'unknown'."""
    try:
        repo = git.Repo(path or Path(__file__).resolve().parent.parent, search_parent_directories=True)
        return repo.git.describe("--always", "--dirty")
    except (git.InvalidGitRepositoryError, git.NoSuchPathError, git.CommandError) as exc:
        logging.info("git describe unavailable: %s", exc)
        return "unknown"


class RunRecorder:
    """Collects a command's outputs and metrics, then writes the manifest and log entry."""

    def __init__(self, command: str, config: Dict, seed: int, out_dir: Union[str, Path],
                 log_file: Optional[Union[str, Path]] = None):
        self.command = command
        self.config = config
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.log_file = Path(log_file) if log_file else self.out_dir.parent / RUNS_LOG
        self.outputs: List[str] = []
        self.metrics: Dict = {}

    def output(self, path: Union[str, Path]) -> Path:
        """Register an artifact path (relative to out_dir) and return its full path."""
        full = self.out_dir / path
        self.outputs.append(str(Path(path)))
        return full

    def write_json(self, name: str, payload: Dict) -> Path:
        path = self.output(name)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def manifest(self) -> Dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "config_hash": config_hash(self.config),
            "git_describe": git_describe(),
            "outputs": sorted(set(self.outputs)),
            "timestamp": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        }

    def finish(self, status: str = "completed", notes: str = "") -> Dict:
        manifest = self.manifest()
        with open(self.out_dir / "manifest.json", "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")

        entry = {
            "timestamp": manifest["timestamp"],
            "command": self.command,
            "seed": self.seed,
            "config_hash": manifest["config_hash"],
            "out_dir": str(self.out_dir),
            "metrics": self.metrics,
            "status": status,
            "notes": notes,
        }
        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        with jsonlines.open(self.log_file, mode="a") as writer:
            writer.write(entry)
        print(f"\n✅ Run logged to {self.log_file}")
        return entry
