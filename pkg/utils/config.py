"""Run configuration: embedded defaults, YAML overrides, hashing and seeds."""

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import yaml
from dotenv import load_dotenv

from utils.errors import ConfigError

DEFAULT_CONFIG: Dict[str, Any] = {
    "seed": 0,
    "data": {
        "dir": None,
        "train_subset": None,
        "test_subset": None,
    },
    "hardware": {
        "insertion_loss": 1.0,
        "gst_attenuation": 1.0,
        "tap_factors": [1.0] * 8,
        "oeo_gain": 1.0,
        "oeo_bounds": [0.0, 1.0],
        "splitting_ratio": 0.5,
    },
    "nofu": {
        "dip_depth": 0.8,
        "linewidth": 0.5,
        "carrier_coeff": 2.0,
        "p_max": 1.0,
    },
    "crosstalk": {
        "xt": 0.0,
        "radius": 1,
    },
    "pretrain": {
        "epochs": 20,
        "batch": 32,
        "lr": 0.001,
        "optimizer": "adam",
        "betas": [0.9, 0.999],
        "eps": 1e-8,
        "momentum": 0.0,
        "s_scale": 10.0,
    },
    "parity": {
        "n_images": 100,
        "budget": 1e-12,
    },
    "spsa": {
        "xt": 0.1,
        "eta": 0.02,
        "c": 0.01,
        "iterations": 100,
        "batch": 64,
        "eval_every": 10,
        "multipliers": {"Conv1": 0.3, "Conv2": 0.5, "FC1": 1.0, "NOFU": 2.0, "FC2": 3.0},
        "decay": None,
    },
    "sweep": {
        "xt_values": [0.0, 0.05, 0.1, 0.12],
        "subset": None,
    },
    "perf": {
        "tau_patch_ns": 1.0,
        "stage_latencies_ns": {"Pool1": 1.2, "Conv2": 121.0, "Pool2": 1.2, "OEO": 40.0,
                               "FC1": 1.2, "NOFU": 1.2, "FC2": 1.2},
        "p_pi": 0.010,
        "fixed_power_w": {"modulator_drivers": 3.0, "other": 1.4},
        "heater_reference_w": 10.3,
        "reference_p_pi": 0.010,
        "n_ops_mode": "formula",
        "reported_n_ops": 268000,
        "preset": None,
    },
}

# Maps whose keys are user-defined; an override replaces the whole map.
FREE_FORM_KEYS = {("perf", "stage_latencies_ns"), ("perf", "fixed_power_w"), ("spsa", "decay")}

SEED_CONSUMERS = ("init", "shuffle", "spsa", "sweep", "sample")

PathLike = Union[str, Path]


def _check_type(path, default, value):
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, (list, tuple)):
        ok = isinstance(value, (list, tuple))
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"Config key {'.'.join(path)} expects {type(default).__name__}, "
                          f"got {type(value).__name__}: {value!r}")


def _merge(base: Dict, override: Dict, path=()) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        here = path + (key,)
        if key not in base:
            raise ConfigError(f"Unknown config key: {'.'.join(here)}")
        default = base[key]
        if here in FREE_FORM_KEYS:
            if value is not None and not isinstance(value, dict):
                raise ConfigError(f"Config key {'.'.join(here)} expects a mapping")
            merged[key] = copy.deepcopy(value)
        elif isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config section {'.'.join(here)} expects a mapping")
            merged[key] = _merge(default, value, here)
        else:
            _check_type(here, default, value)
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[PathLike] = None, overrides: Optional[Dict] = None) -> Dict:
    """Defaults, then the YAML file, then explicit overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path) as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must hold a mapping")
        config = _merge(config, loaded)
    if overrides:
        config = _merge(config, overrides)
    return config


def config_hash(config: Dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def split_seed(root_seed: int, consumer: str) -> int:
    """Independent child seed for one randomness consumer."""
    if consumer not in SEED_CONSUMERS:
        raise ConfigError(f"Unknown seed consumer: {consumer} (known: {', '.join(SEED_CONSUMERS)})")
    sequence = np.random.SeedSequence(int(root_seed), spawn_key=(SEED_CONSUMERS.index(consumer),))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def load_environment() -> None:
    load_dotenv()


def data_dir(config: Dict) -> Path:
    return Path(config["data"]["dir"] or os.getenv("PCNN_DATA_DIR", "data"))


def results_dir(override: Optional[PathLike] = None) -> Path:
    return Path(override or os.getenv("PCNN_RESULTS_DIR", "results"))
