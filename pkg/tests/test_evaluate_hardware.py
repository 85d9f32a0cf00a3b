import csv
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from evaluate_hardware import EvalResult, HardwareEvaluator, SweepRow, evaluate
from utils.config import load_config
from utils.errors import ConfigError
from utils.idx_loader import Dataset
from utils.network_layers import init_phases


@pytest.fixture
def dataset():
    rng = np.random.default_rng(0)
    return Dataset(rng.integers(0, 256, size=(6, 28, 28)), rng.integers(0, 10, size=6))


def test_eval_result_from_predictions():
    result = EvalResult.from_predictions([0, 0, 1, 2], [0, 1, 1, 2])
    assert result.accuracy == 0.75
    assert result.confusion.sum() == 4
    assert result.confusion[0, 1] == 1
    assert result.per_class_acc[0] == 0.5
    assert result.per_class_acc[1] == 1.0
    # absent class
    assert result.per_class_acc[9] == 0.0
    assert result.to_dict()["n_images"] == 4


def test_accuracy_matches_confusion_trace(dataset):
    result = evaluate(init_phases(seed=1), dataset)
    assert result.confusion.sum() == len(dataset)
    assert result.accuracy == pytest.approx(np.trace(result.confusion) / len(dataset))
    assert all(0.0 <= acc <= 1.0 for acc in result.per_class_acc)


def test_twin_and_hardware_modes_agree(dataset):
    theta = init_phases(seed=2)
    hardware = evaluate(theta, dataset, "hardware")
    twin = evaluate(theta, dataset, "twin")
    assert np.array_equal(hardware.confusion, twin.confusion)
    with pytest.raises(ConfigError):
        evaluate(theta, dataset, "analog")


def test_sweep_starts_with_zero_drop(dataset, capsys):
    evaluator = HardwareEvaluator(load_config(), progress=False)
    rows = evaluator.xtalk_sweep(init_phases(seed=3), dataset, [0.0, 0.1])
    assert rows[0].xt == 0.0 and rows[0].drop == 0.0
    assert rows[1].drop == pytest.approx(rows[0].accuracy - rows[1].accuracy)
    assert "xt=0.1" in capsys.readouterr().out
    with pytest.raises(ConfigError):
        evaluator.xtalk_sweep(init_phases(seed=3), dataset, [-0.1])


def test_zero_crosstalk_builds_no_model():
    evaluator = HardwareEvaluator(load_config(), progress=False)
    assert evaluator.crosstalk(0.0) is None
    assert evaluator.crosstalk(0.1).xt == 0.1


def test_sweep_subset_is_seeded(dataset):
    config = load_config(overrides={"sweep": {"subset": 3}})
    first = HardwareEvaluator(config, seed=4, progress=False).sweep_subset(dataset)
    again = HardwareEvaluator(config, seed=4, progress=False).sweep_subset(dataset)
    assert len(first) == 3
    assert np.array_equal(first.labels, again.labels)
    assert np.array_equal(first.images, again.images)


def test_is_monotonic():
    falling = [SweepRow(0.0, 0.9, 0.0), SweepRow(0.1, 0.7, 0.2), SweepRow(0.05, 0.8, 0.1)]
    assert HardwareEvaluator.is_monotonic(falling)
    rising = [SweepRow(0.0, 0.9, 0.0), SweepRow(0.1, 0.95, -0.05)]
    assert not HardwareEvaluator.is_monotonic(rising)


def test_csv_writers(tmp_path):
    result = EvalResult.from_predictions([0, 1, 1], [0, 1, 0])
    path = HardwareEvaluator.write_confusion(tmp_path / "confusion.csv", result)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["true\\pred"] + [str(c) for c in range(10)]
    assert len(rows) == 11
    assert rows[2][1:3] == ["1", "1"]

    sweep = HardwareEvaluator.write_sweep(tmp_path / "sweep.csv", [SweepRow(0.0, 0.9, 0.0)])
    assert sweep.read_text().splitlines()[0] == "xt,accuracy,drop"
