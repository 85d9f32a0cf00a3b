import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.errors import ConfigError, DimensionError, InputError, LayoutError
from utils.network_layers import (
    FC1_GROUPS,
    FeatureMap,
    HardwareProfile,
    HardwareSimulator,
    NofuGlobals,
    NofuParams,
    accuracy,
    build_network_spec,
    combiner_matrix,
    encode_image,
    extract_patches,
    fc1_forward,
    init_phases,
    network_forward,
    nofu_forward,
    optical_maxpool,
    oeo_stage,
    predict,
    wdm_pool2,
)
from utils.photonic_core import build_adjacency


def test_segments_follow_layout():
    spec = build_network_spec()
    segments = spec.segments
    assert spec.n_params == 2132
    assert segments["conv1"] == slice(0, 100)
    assert segments["dw0"] == slice(100, 200)
    assert segments["pw"] == slice(500, 564)
    assert segments["fc1_weights"] == slice(564, 900)
    assert segments["fc1_mesh"] == slice(900, 1924)
    assert segments["nofu"] == slice(1924, 1988)
    assert segments["fc2_mesh"] == slice(1988, 2132)
    with pytest.raises(LayoutError):
        spec.split(np.zeros(10))


def test_phase_mask_excludes_detuning_biases():
    mask = build_network_spec().phase_mask()
    assert mask.sum() == 2132 - 32
    assert not mask[1925] and mask[1924]
    assert not mask[1987]


def test_mac_layers():
    layers = build_network_spec().mac_layers()
    assert layers == [("Conv1", 10, 676), ("Conv2-dw", 10, 484), ("Conv2-pw", 8, 121),
                      ("FC1", 32, 1), ("FC2", 10, 1)]


def test_init_phases_ranges_and_determinism():
    theta = init_phases(seed=4)
    assert theta.shape == (2132,)
    assert np.array_equal(theta, init_phases(seed=4))
    assert not np.array_equal(theta, init_phases(seed=5))
    assert np.all(np.abs(theta[564:900]) <= np.pi / 2)
    assert np.all(theta[1924:1988:2] == np.pi / 2)
    assert np.all(theta[1925:1988:2] == NofuGlobals().linewidth)


def test_encode_image_and_patches():
    assert encode_image(np.array([0, 255])).tolist() == [0.0, 1.0]
    with pytest.raises(InputError):
        encode_image(np.array([256]))

    image = np.arange(28 * 28, dtype=np.float64).reshape(28, 28)
    patches = extract_patches(image)
    assert patches.shape == (676, 9)
    assert np.array_equal(patches[0], image[0:3, 0:3].ravel())
    assert np.array_equal(patches[26], image[1:4, 0:3].ravel())
    assert np.array_equal(patches[27], image[1:4, 1:4].ravel())
    with pytest.raises(DimensionError):
        extract_patches(np.zeros((2, 2)))


def test_maxpool_keeps_complex_winner():
    window = np.array([[[1.0, -2.0], [0.5j, 0.1]]])
    pooled = optical_maxpool(window)
    assert pooled.shape == (1, 1, 1)
    assert pooled[0, 0, 0] == -2.0


def test_maxpool_ties_go_to_first_in_row_major_order():
    window = np.array([[[1.0, -1.0], [1j, 0.5]]])
    assert optical_maxpool(window)[0, 0, 0] == 1.0


def test_maxpool_floors_odd_maps():
    values = np.random.default_rng(0).normal(size=(8, 11, 11))
    assert optical_maxpool(values).shape == (8, 5, 5)
    assert optical_maxpool(np.zeros((4, 26, 26))).shape == (4, 13, 13)
    wrapped = optical_maxpool(FeatureMap(np.zeros((4, 26, 26))))
    assert isinstance(wrapped, FeatureMap) and wrapped.height == 13


def test_wdm_pool_needs_eight_channels():
    with pytest.raises(ConfigError):
        wdm_pool2(np.zeros((4, 11, 11)))
    assert wdm_pool2(np.ones((8, 11, 11))).shape == (8, 5, 5)


def test_oeo_drops_phase_and_clips():
    out = oeo_stage(np.array([-0.5, 0.3j, 4.0]))
    assert np.allclose(out, [0.5, 0.3, 1.0])
    assert np.isrealobj(out)
    assert oeo_stage(np.array([0.2]), gain=4.0)[0] == pytest.approx(0.4)


def test_combiner_rows_are_disjoint_and_normalized():
    matrix = combiner_matrix(FC1_GROUPS)
    assert matrix.shape == (32, 336)
    assert np.allclose(np.linalg.norm(matrix, axis=1), 1.0)
    assert np.all((matrix > 0).sum(axis=0) == 1)


def test_fc1_blocking_weights_zero_the_output():
    spec = build_network_spec()
    inputs = np.random.default_rng(1).uniform(0, 1, 200)
    out = fc1_forward(np.full(336, np.pi), np.zeros(spec.fc1_mesh.n_params), inputs)
    assert np.max(np.abs(out)) < 1e-14
    with pytest.raises(DimensionError):
        fc1_forward(np.zeros(336), np.zeros(spec.fc1_mesh.n_params), np.zeros(199))


def test_nofu_transmission():
    params = NofuParams(alpha_phase=np.zeros(32), delta=np.full(32, 0.5))
    fields = np.full(32, 0.7 + 0.1j)
    out = nofu_forward(fields, params)
    assert np.allclose(out, fields * np.sqrt(0.6))

    blocked = NofuParams(alpha_phase=np.full(32, np.pi), delta=np.zeros(32))
    assert np.max(np.abs(nofu_forward(fields, blocked))) < 1e-15

    with pytest.raises(DimensionError):
        NofuParams.from_slice(np.zeros(63))
    interleaved = NofuParams.from_slice(np.arange(64.0))
    assert interleaved.alpha_phase[1] == 2.0 and interleaved.delta[1] == 3.0


def test_predict_and_accuracy():
    scores = np.array([[0.1, 0.9, 0.9], [0.5, 0.2, 0.1]])
    assert predict(scores).tolist() == [1, 0]
    assert accuracy(scores, [1, 1]) == 0.5
    assert accuracy(np.zeros((0, 10)), []) == 0.0


def test_hardware_forward_shapes():
    theta = init_phases(seed=0)
    images = np.random.default_rng(2).integers(0, 256, size=(3, 28, 28))
    hardware = HardwareSimulator()
    batch = hardware.forward(theta, images)
    assert batch.shape == (3, 10)
    assert np.all(batch >= 0)
    assert np.allclose(hardware.forward(theta, images[0]), batch[0], atol=1e-14)
    assert hardware.scores(theta, images, batch_size=2).shape == (3, 10)
    with pytest.raises(DimensionError):
        hardware.forward(theta, np.zeros((27, 28)))


def test_zero_crosstalk_matches_clean_hardware():
    theta = init_phases(seed=1)
    images = np.random.default_rng(3).integers(0, 256, size=(2, 28, 28))
    clean = HardwareSimulator().forward(theta, images)
    spec = build_network_spec()
    zero = HardwareSimulator(crosstalk=build_adjacency(spec.layout, 0.0)).forward(theta, images)
    assert np.array_equal(clean, zero)


def test_crosstalk_changes_the_scores():
    theta = init_phases(seed=1)
    images = np.random.default_rng(3).integers(0, 256, size=(2, 28, 28))
    spec = build_network_spec()
    clean = HardwareSimulator().forward(theta, images)
    perturbed = HardwareSimulator(crosstalk=build_adjacency(spec.layout, 0.1)).forward(theta, images)
    assert not np.allclose(clean, perturbed)


def test_profile_validation():
    with pytest.raises(ConfigError):
        HardwareProfile(tap_factors=(1.0,) * 7)
    with pytest.raises(ConfigError):
        HardwareProfile(oeo_gain=0.0)
    with pytest.raises(ConfigError):
        HardwareProfile(splitting_ratio=1.0)


def test_unknown_forward_mode():
    with pytest.raises(ConfigError):
        network_forward(init_phases(), np.zeros((28, 28)), mode="optical")
