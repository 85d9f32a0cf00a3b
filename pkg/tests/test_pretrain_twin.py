import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from pretrain_twin import TwinTrainer, pretrain
from utils.config import load_config
from utils.errors import ConfigError, InputError, TrainingDiverged
from utils.idx_loader import Dataset
from utils.network_layers import init_phases


def small_sets():
    rng = np.random.default_rng(0)
    train = Dataset(rng.integers(0, 256, size=(4, 28, 28)), [0, 1, 0, 1])
    test = Dataset(rng.integers(0, 256, size=(3, 28, 28)), [0, 1, 2])
    return train, test


def small_config(**pretrain):
    settings = {"epochs": 2, "batch": 4, "lr": 0.01}
    settings.update(pretrain)
    return load_config(overrides={"pretrain": settings})


def test_one_record_per_epoch(capsys):
    train, test = small_sets()
    theta, records = pretrain(train, test, small_config(), seed=1)
    assert theta.shape == (2132,)
    assert [r.epoch for r in records] == [1, 2]
    assert all(0.0 <= r.test_acc <= 1.0 for r in records)
    assert "Epoch   2/2" in capsys.readouterr().out


def test_training_reduces_the_loss():
    train, test = small_sets()
    _, records = pretrain(train, test, small_config(epochs=15), seed=2)
    assert records[-1].train_loss < records[0].train_loss


def test_same_seed_same_phases():
    train, test = small_sets()
    first, _ = pretrain(train, test, small_config(), seed=3)
    second, _ = pretrain(train, test, small_config(), seed=3)
    assert np.array_equal(first, second)


def test_sgd_optimizer_is_supported():
    train, test = small_sets()
    _, records = pretrain(train, test, small_config(optimizer="sgd", momentum=0.9), seed=4)
    assert len(records) == 2


def test_unknown_optimizer():
    train, test = small_sets()
    trainer = TwinTrainer(small_config(optimizer="lbfgs"), progress=False)
    with pytest.raises(ConfigError):
        trainer.train(train, test)


def test_empty_sets_are_rejected():
    train, _ = small_sets()
    empty = Dataset(np.zeros((0, 28, 28)), np.zeros(0))
    with pytest.raises(InputError):
        TwinTrainer(small_config(), progress=False).train(train, empty)


def test_non_finite_phases_abort_training():
    train, test = small_sets()
    theta0 = init_phases(seed=5)
    theta0[10] = np.nan
    with pytest.raises(TrainingDiverged) as excinfo:
        TwinTrainer(small_config(), progress=False).train(train, test, theta0)
    assert excinfo.value.records == []
    assert "Conv1" in str(excinfo.value)
