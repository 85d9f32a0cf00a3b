import math
import os
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.errors import LayoutError, NumericError
from utils.network_layers import HardwareSimulator, build_network_spec, init_phases
from utils.photonic_core import PCNN_LAYOUT, build_clements_mesh, mesh_transfer_matrix
from utils.twin_model import (
    LossRecord,
    PhotonicTwin,
    backward,
    loss,
    mesh_transfer,
    mzi_parity,
    parity_check,
    transfer_phases,
)


@pytest.fixture(scope="module")
def twin():
    return PhotonicTwin()


def test_uniform_scores_give_log_ten():
    assert abs(loss(np.full(10, 0.3), 4) - math.log(10)) < 1e-12


def test_loss_is_permutation_invariant_and_sharpens_with_scale():
    scores = np.random.default_rng(0).uniform(0, 1, 10)
    order = np.random.default_rng(1).permutation(10)
    assert loss(scores, 3) == pytest.approx(loss(scores[order], int(np.argwhere(order == 3)[0, 0])))

    onehot = np.eye(10)[7]
    assert loss(onehot, 7, s_scale=20) < loss(onehot, 7, s_scale=10) < loss(onehot, 7, s_scale=1)


def test_mesh_transfer_matches_simulator():
    mesh = build_clements_mesh(12)
    phases = np.random.default_rng(2).uniform(-np.pi, np.pi, mesh.n_params)
    twin_u = mesh_transfer(mesh, torch.as_tensor(phases)).numpy()
    assert np.max(np.abs(twin_u - mesh_transfer_matrix(mesh, phases))) < 1e-13


def test_mzi_parity():
    assert mzi_parity(1000, seed=0) < 1e-15
    assert mzi_parity(200, seed=1, splitting_ratio=0.45) < 1e-14


def test_twin_and_hardware_agree_without_crosstalk():
    theta = init_phases(seed=3)
    images = np.random.default_rng(4).integers(0, 256, size=(20, 28, 28))
    assert parity_check(theta, images) < 1e-12


def test_parity_survives_phase_wrapping():
    theta = init_phases(seed=3)
    shifted = theta + 2 * np.pi * build_network_spec().phase_mask()
    images = np.random.default_rng(5).integers(0, 256, size=(4, 28, 28))
    hardware = HardwareSimulator()
    twin_scores = PhotonicTwin().scores(shifted, images)
    assert np.max(np.abs(twin_scores - hardware.scores(theta, images))) < 1e-10


def test_scores_shapes(twin):
    theta = init_phases(seed=0)
    images = np.random.default_rng(6).integers(0, 256, size=(3, 28, 28))
    assert twin.scores(theta, images).shape == (3, 10)
    assert twin.scores(theta, images[0]).shape == (10,)
    with pytest.raises(LayoutError):
        twin.forward(torch.zeros(10, dtype=torch.float64), torch.as_tensor(images))


def test_gradient_matches_finite_differences(twin):
    theta = init_phases(seed=7)
    # dim pixels keep every O/E/O value below the clip level
    images = np.random.default_rng(8).integers(0, 26, size=(5, 28, 28))
    labels = np.array([3, 0, 7, 1, 9])
    value, grad = twin.backward(theta, images, labels)
    assert grad.shape == (2132,)
    assert value > 0

    images_t, labels_t = torch.as_tensor(images), torch.as_tensor(labels)

    def objective(vector):
        with torch.no_grad():
            return float(twin.loss(torch.as_tensor(vector), images_t, labels_t))

    rng = np.random.default_rng(9)
    h = 1e-6
    center = objective(theta)
    kinks = 0
    for layer in PCNN_LAYOUT.ranges:
        for i in rng.choice(np.arange(layer.start, layer.stop), 50, replace=False):
            plus, minus = theta.copy(), theta.copy()
            plus[i] += h
            minus[i] -= h
            f_plus, f_minus = objective(plus), objective(minus)
            # a max-pool winner switching inside [-h, h] makes the loss non-differentiable there
            if abs((f_plus - center) - (center - f_minus)) > 1e-10:
                kinks += 1
                continue
            fd = (f_plus - f_minus) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-5 * abs(grad[i]) + 1e-7, (layer.name, int(i), fd, grad[i])
    assert kinks <= 2


def test_padded_weight_gradients_are_zero(twin):
    theta = init_phases(seed=10)
    images = np.random.default_rng(11).integers(0, 256, size=(2, 28, 28))
    _, grad = twin.backward(theta, images, np.array([1, 2]))
    assert np.all(grad[764:900] == 0.0)
    assert np.any(grad[564:764] != 0.0)


def test_non_finite_phase_names_the_layer():
    theta = init_phases(seed=0)
    theta[5] = np.nan
    with pytest.raises(NumericError) as excinfo:
        backward(theta, np.zeros((28, 28), dtype=np.uint8), 0)
    assert excinfo.value.layer == "Conv1"


def test_transfer_is_an_independent_copy():
    theta = init_phases(seed=12)
    transferred = transfer_phases(theta)
    assert np.array_equal(transferred, theta)
    assert np.array_equal(transfer_phases(transferred), transferred)
    transferred[0] += 1.0
    assert theta[0] != transferred[0]
    with pytest.raises(LayoutError):
        transfer_phases(np.zeros(2131))


def test_loss_record_validates_accuracy():
    LossRecord(epoch=1, train_loss=2.3, train_acc=0.1, test_acc=1.0)
    with pytest.raises(ValueError):
        LossRecord(epoch=1, train_loss=2.3, train_acc=1.2, test_acc=0.5)
