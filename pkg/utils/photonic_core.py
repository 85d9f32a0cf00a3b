"""Complex-amplitude linear optics for the hardware simulator.

MZI transfer matrices, rectangular Clements meshes, tunable attenuators,
the global phase-vector layout and thermal crosstalk. Everything here is a
pure numpy function of its inputs.

MZI convention (internal phase theta, external phase phi, 50:50 couplers):

    U(theta, phi) = i e^{i theta/2} [[e^{i phi} sin(theta/2),  cos(theta/2)],
                                     [e^{i phi} cos(theta/2), -sin(theta/2)]]

Inside a mesh the phases are laid out column-major, top-down within a column,
(theta, phi) per node, followed by the N output phase shifters.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np

from utils.errors import DimensionError, LayoutError, TopologyError

BALANCED_SPLIT = 0.5


@dataclass
class OpticalField:
    """Complex amplitudes (sqrt(W)) on waveguide modes of one wavelength channel."""

    amplitudes: np.ndarray
    channel: int = 0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if not 0 <= self.channel <= 7:
            raise DimensionError(f"Wavelength channel must be in 0..7, got {self.channel}")

    @property
    def n_modes(self) -> int:
        return self.amplitudes.shape[-1]

    def power(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class MziNode:
    """One MZI of a mesh; theta/phi are slots in the mesh's phase slice."""

    column: int
    upper: int
    theta_index: int
    phi_index: int

    @property
    def mode_pair(self) -> Tuple[int, int]:
        return (self.upper, self.upper + 1)


@dataclass(frozen=True)
class MeshColumn:
    uppers: np.ndarray
    lowers: np.ndarray
    theta_slots: np.ndarray
    phi_slots: np.ndarray


@dataclass(frozen=True)
class MeshSpec:
    n_modes: int
    nodes: Tuple[MziNode, ...]
    columns: Tuple[MeshColumn, ...]
    output_phase_slots: np.ndarray

    @property
    def n_mzis(self) -> int:
        return len(self.nodes)

    @property
    def n_params(self) -> int:
        return 2 * len(self.nodes) + self.n_modes


@lru_cache(maxsize=None)
def build_clements_mesh(n_modes: int) -> MeshSpec:
    """Rectangular Clements arrangement: N columns alternating even/odd pairs."""
    if n_modes < 2:
        raise TopologyError(f"A Clements mesh needs at least 2 modes, got {n_modes}")

    nodes: List[MziNode] = []
    columns: List[MeshColumn] = []
    slot = 0
    for column in range(n_modes):
        uppers = list(range(column % 2, n_modes - 1, 2))
        theta_slots, phi_slots = [], []
        for upper in uppers:
            nodes.append(MziNode(column, upper, slot, slot + 1))
            theta_slots.append(slot)
            phi_slots.append(slot + 1)
            slot += 2
        uppers_arr = np.array(uppers, dtype=np.int64)
        columns.append(MeshColumn(
            uppers=uppers_arr,
            lowers=uppers_arr + 1,
            theta_slots=np.array(theta_slots, dtype=np.int64),
            phi_slots=np.array(phi_slots, dtype=np.int64),
        ))
    output_slots = np.arange(slot, slot + n_modes, dtype=np.int64)
    return MeshSpec(n_modes, tuple(nodes), tuple(columns), output_slots)


def mzi_coefficients(theta, phi, splitting_ratio: float = BALANCED_SPLIT):
    """Return the four entries (a, b, c, d) of U(theta, phi), elementwise."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    external = np.exp(1j * phi)
    if splitting_ratio == BALANCED_SPLIT:
        prefactor = 1j * np.exp(0.5j * theta)
        s = np.sin(theta / 2)
        c = np.cos(theta / 2)
        return prefactor * external * s, prefactor * c, prefactor * external * c, -prefactor * s

    # BS(r) . diag(e^{i theta}, 1) . BS(r) . diag(e^{i phi}, 1)
    t = np.sqrt(splitting_ratio)
    k = np.sqrt(1.0 - splitting_ratio)
    internal = np.exp(1j * theta)
    cross = 1j * t * k * (internal + 1.0)
    return ((t * t * internal - k * k) * external, cross,
            cross * external, t * t - k * k * internal)


def mzi_transfer(theta: float, phi: float, splitting_ratio: float = BALANCED_SPLIT) -> np.ndarray:
    a, b, c, d = mzi_coefficients(theta, phi, splitting_ratio)
    return np.array([[a, b], [c, d]], dtype=np.complex128)


def _check_phases(mesh: MeshSpec, phases: np.ndarray) -> np.ndarray:
    phases = np.asarray(phases, dtype=np.float64)
    if phases.shape != (mesh.n_params,):
        raise DimensionError(
            f"Mesh with {mesh.n_modes} modes needs {mesh.n_params} phases, got {phases.shape}"
        )
    return phases


def propagate(mesh: MeshSpec, phases: np.ndarray, fields: np.ndarray,
              splitting_ratio: float = BALANCED_SPLIT) -> np.ndarray:
    """Push fields of shape (..., N) through every column and the output phases."""
    phases = _check_phases(mesh, phases)
    out = np.array(fields, dtype=np.complex128, copy=True)
    if out.shape[-1] != mesh.n_modes:
        raise DimensionError(f"Field has {out.shape[-1]} modes, mesh has {mesh.n_modes}")

    for column in mesh.columns:
        a, b, c, d = mzi_coefficients(phases[column.theta_slots], phases[column.phi_slots],
                                      splitting_ratio)
        upper = out[..., column.uppers]
        lower = out[..., column.lowers]
        out[..., column.uppers] = a * upper + b * lower
        out[..., column.lowers] = c * upper + d * lower
    return out * np.exp(1j * phases[mesh.output_phase_slots])


def mesh_transfer_matrix(mesh: MeshSpec, phases: np.ndarray,
                         splitting_ratio: float = BALANCED_SPLIT) -> np.ndarray:
    """Composed N x N transfer matrix U with output = U @ input."""
    # Row k of the propagated identity is U e_k, i.e. column k of U.
    return propagate(mesh, phases, np.eye(mesh.n_modes, dtype=np.complex128), splitting_ratio).T


def mesh_forward(mesh: MeshSpec, phases: np.ndarray,
                 field: Union[OpticalField, np.ndarray],
                 splitting_ratio: float = BALANCED_SPLIT,
                 insertion_loss: float = 1.0):
    """Apply a mesh to an OpticalField or to a batch of amplitude vectors (..., N)."""
    if isinstance(field, OpticalField):
        if field.n_modes != mesh.n_modes:
            raise DimensionError(f"Field has {field.n_modes} modes, mesh has {mesh.n_modes}")
        out = mesh_forward(mesh, phases, field.amplitudes, splitting_ratio, insertion_loss)
        return OpticalField(out, field.channel)

    field = np.asarray(field, dtype=np.complex128)
    if field.shape[-1] != mesh.n_modes:
        raise DimensionError(f"Field has {field.shape[-1]} modes, mesh has {mesh.n_modes}")
    unitary = mesh_transfer_matrix(mesh, phases, splitting_ratio)
    out = field @ unitary.T
    if insertion_loss != 1.0:
        out = out * insertion_loss
    return out


def attenuator_amplitude(weight_phase):
    """Transmitted amplitude of a single-phase MZI attenuator, in [0, 1]."""
    return np.abs(np.cos(np.asarray(weight_phase, dtype=np.float64) / 2))


def wrap_phase(values):
    """Wrap to [-pi, pi)."""
    values = np.asarray(values, dtype=np.float64)
    return np.mod(values + np.pi, 2 * np.pi) - np.pi


# --------------------------------------------------------------------------
# Parameter layout
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerRange:
    name: str
    start: int
    stop: int

    @property
    def count(self) -> int:
        return self.stop - self.start

    def as_slice(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class ParameterLayout:
    """Named contiguous slices of the global phase vector."""

    ranges: Tuple[LayerRange, ...]

    def __post_init__(self):
        cursor = 0
        for layer in self.ranges:
            if layer.start != cursor or layer.stop <= layer.start:
                raise LayoutError(f"Layer {layer.name} breaks contiguity at index {cursor}")
            cursor = layer.stop

    @property
    def total(self) -> int:
        return self.ranges[-1].stop if self.ranges else 0

    @property
    def names(self) -> List[str]:
        return [layer.name for layer in self.ranges]

    def __getitem__(self, name: str) -> LayerRange:
        for layer in self.ranges:
            if layer.name == name:
                return layer
        raise LayoutError(f"Unknown layer range: {name}")

    def layer_of(self, index: int) -> LayerRange:
        for layer in self.ranges:
            if layer.start <= index < layer.stop:
                return layer
        raise LayoutError(f"Index {index} is outside the layout [0, {self.total})")

    def validate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.total,):
            raise LayoutError(f"Phase vector must have {self.total} entries, got {theta.shape}")
        return theta


PCNN_LAYER_COUNTS = (
    ("Conv1", 100),
    ("Conv2", 464),
    ("FC1", 1360),
    ("NOFU", 64),
    ("FC2", 144),
)


def build_layout(counts=PCNN_LAYER_COUNTS) -> ParameterLayout:
    ranges, cursor = [], 0
    for name, count in counts:
        ranges.append(LayerRange(name, cursor, cursor + count))
        cursor += count
    return ParameterLayout(tuple(ranges))


PCNN_LAYOUT = build_layout()


def realize_phases(theta: np.ndarray, phase_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Heater-realized phase vector: phase entries wrapped, others untouched."""
    theta = np.asarray(theta, dtype=np.float64)
    if phase_mask is None:
        return wrap_phase(theta)
    return np.where(phase_mask, wrap_phase(theta), theta)


# --------------------------------------------------------------------------
# Thermal crosstalk
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CrosstalkModel:
    """Linear heater leakage: theta'_i = theta_i + xt * sum_{j in adj(i)} theta_j."""

    xt: float
    sources: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    size: int = 0

    def __post_init__(self):
        if self.xt < 0:
            raise LayoutError(f"Crosstalk factor must be non-negative, got {self.xt}")

    def neighbors(self, index: int) -> List[int]:
        return sorted(int(j) for j in self.sources[self.targets == index])


def build_adjacency(layout: ParameterLayout, xt: float, radius: int = 1) -> CrosstalkModel:
    """Index-neighbours within `radius`, never across a layer boundary."""
    sources, targets = [], []
    for layer in layout.ranges:
        for offset in range(1, radius + 1):
            left = np.arange(layer.start, layer.stop - offset)
            right = left + offset
            sources.extend([left, right])
            targets.extend([right, left])
    if sources:
        src = np.concatenate(sources)
        dst = np.concatenate(targets)
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    return CrosstalkModel(float(xt), src, dst, layout.total)


def apply_crosstalk(phases: np.ndarray, model: Optional[CrosstalkModel]) -> np.ndarray:
    """Effective phases under crosstalk; the input vector is never modified."""
    phases = np.asarray(phases, dtype=np.float64)
    if model is None or model.xt == 0.0:
        return phases.copy()
    if phases.shape != (model.size,):
        raise LayoutError(f"Crosstalk model covers {model.size} phases, got {phases.shape}")
    leak = np.zeros_like(phases)
    np.add.at(leak, model.targets, phases[model.sources])
    return phases + model.xt * leak
