import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.errors import DimensionError, LayoutError, TopologyError
from utils.photonic_core import (
    PCNN_LAYOUT,
    LayerRange,
    OpticalField,
    ParameterLayout,
    apply_crosstalk,
    attenuator_amplitude,
    build_adjacency,
    build_clements_mesh,
    mesh_forward,
    mesh_transfer_matrix,
    mzi_transfer,
    realize_phases,
    wrap_phase,
)


@pytest.mark.parametrize("n", [2, 8, 10, 12, 32])
def test_random_meshes_are_unitary(n):
    mesh = build_clements_mesh(n)
    rng = np.random.default_rng(n)
    for _ in range(100):
        u = mesh_transfer_matrix(mesh, rng.uniform(-np.pi, np.pi, mesh.n_params))
        assert np.max(np.abs(u.conj().T @ u - np.eye(n))) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 8, 10, 12, 32])
def test_mesh_has_n_squared_parameters(n):
    mesh = build_clements_mesh(n)
    assert mesh.n_mzis == n * (n - 1) // 2
    assert mesh.n_params == n * n
    assert len(mesh.columns) == n


def test_columns_alternate_even_and_odd_pairs():
    mesh = build_clements_mesh(4)
    assert [node.mode_pair for node in mesh.nodes if node.column == 0] == [(0, 1), (2, 3)]
    assert [node.mode_pair for node in mesh.nodes if node.column == 1] == [(1, 2)]
    # column-major (theta, phi) slots, output phases last
    assert [(node.theta_index, node.phi_index) for node in mesh.nodes[:3]] == [(0, 1), (2, 3), (4, 5)]
    assert list(mesh.output_phase_slots) == [12, 13, 14, 15]


def test_mesh_below_two_modes_is_rejected():
    with pytest.raises(TopologyError):
        build_clements_mesh(1)


def test_mzi_cross_and_bar_states():
    cross = mzi_transfer(0.0, 0.3)
    assert abs(cross[0, 0]) < 1e-15 and abs(abs(cross[0, 1]) - 1.0) < 1e-15
    bar = mzi_transfer(np.pi, 0.3)
    assert abs(abs(bar[0, 0]) - 1.0) < 1e-15 and abs(bar[0, 1]) < 1e-15


def test_unbalanced_coupler_stays_unitary_and_matches_balanced_limit():
    u = mzi_transfer(0.7, -1.1, splitting_ratio=0.4)
    assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-14
    near_balanced = mzi_transfer(0.7, -1.1, splitting_ratio=0.5 + 1e-13)
    assert np.max(np.abs(near_balanced - mzi_transfer(0.7, -1.1))) < 1e-9


def test_mesh_forward_matches_transfer_matrix_and_conserves_power():
    mesh = build_clements_mesh(8)
    rng = np.random.default_rng(1)
    phases = rng.uniform(-np.pi, np.pi, mesh.n_params)
    field = rng.normal(size=8) + 1j * rng.normal(size=8)

    out = mesh_forward(mesh, phases, OpticalField(field, channel=3))
    assert out.channel == 3
    assert np.allclose(out.amplitudes, mesh_transfer_matrix(mesh, phases) @ field, atol=1e-13)
    assert out.power() == pytest.approx(OpticalField(field).power(), rel=1e-12)


def test_mesh_forward_rejects_wrong_sizes():
    mesh = build_clements_mesh(4)
    with pytest.raises(DimensionError):
        mesh_forward(mesh, np.zeros(15), np.ones(4))
    with pytest.raises(DimensionError):
        mesh_forward(mesh, np.zeros(16), np.ones(5))
    with pytest.raises(DimensionError):
        OpticalField(np.ones(4), channel=8)


def test_pcnn_layout_ranges():
    spans = [(r.name, r.start, r.stop) for r in PCNN_LAYOUT.ranges]
    assert spans == [("Conv1", 0, 100), ("Conv2", 100, 564), ("FC1", 564, 1924),
                     ("NOFU", 1924, 1988), ("FC2", 1988, 2132)]
    assert PCNN_LAYOUT.total == 2132
    assert PCNN_LAYOUT.layer_of(1924).name == "NOFU"
    assert PCNN_LAYOUT.layer_of(563).name == "Conv2"
    with pytest.raises(LayoutError):
        PCNN_LAYOUT.layer_of(2132)
    with pytest.raises(LayoutError):
        PCNN_LAYOUT.validate(np.zeros(2131))


def test_layout_must_be_contiguous():
    with pytest.raises(LayoutError):
        ParameterLayout((LayerRange("a", 0, 5), LayerRange("b", 6, 8)))


def test_wrap_phase_range():
    assert wrap_phase(np.pi) == pytest.approx(-np.pi)
    assert wrap_phase(1.0 + 4 * np.pi) == pytest.approx(1.0)
    values = wrap_phase(np.linspace(-20, 20, 401))
    assert values.min() >= -np.pi and values.max() < np.pi


def test_realize_phases_leaves_masked_out_entries():
    theta = np.array([4.0, 4.0])
    realized = realize_phases(theta, np.array([True, False]))
    assert realized[0] == pytest.approx(4.0 - 2 * np.pi)
    assert realized[1] == 4.0


def test_attenuator_amplitude_in_unit_interval():
    values = attenuator_amplitude(np.linspace(-10, 10, 101))
    assert values.min() >= 0.0 and values.max() <= 1.0
    assert attenuator_amplitude(0.0) == 1.0
    assert attenuator_amplitude(np.pi) == pytest.approx(0.0, abs=1e-15)


def test_crosstalk_neighbours_stay_inside_layers():
    model = build_adjacency(PCNN_LAYOUT, 0.1)
    assert model.neighbors(50) == [49, 51]
    assert model.neighbors(100) == [101]
    assert model.neighbors(99) == [98]
    assert model.neighbors(2131) == [2130]
    wide = build_adjacency(PCNN_LAYOUT, 0.1, radius=2)
    assert wide.neighbors(50) == [48, 49, 51, 52]


def test_crosstalk_is_linear_and_isolated():
    model = build_adjacency(PCNN_LAYOUT, 0.1)
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=2132), rng.normal(size=2132)
    assert np.allclose(apply_crosstalk(a + b, model),
                       apply_crosstalk(a, model) + apply_crosstalk(b, model), atol=1e-12)

    spike = np.zeros(2132)
    spike[563] = 1.0
    out = apply_crosstalk(spike, model)
    assert out[562] == pytest.approx(0.1)
    assert out[564] == 0.0
    assert spike[562] == 0.0


def test_zero_crosstalk_is_identity():
    theta = np.random.default_rng(3).normal(size=2132)
    assert np.array_equal(apply_crosstalk(theta, build_adjacency(PCNN_LAYOUT, 0.0)), theta)
    assert np.array_equal(apply_crosstalk(theta, None), theta)
    with pytest.raises(LayoutError):
        build_adjacency(PCNN_LAYOUT, -0.1)
