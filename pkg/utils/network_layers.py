"""PCNN forward pass on the hardware simulator.

encode -> Conv1 -> Pool1 -> Conv2 (depthwise, pointwise) -> Pool2 (WDM)
-> O/E/O -> FC1 -> NOFU -> FC2 -> intensity readout.

All layer functions accept leading batch dimensions. The differentiable twin in
utils/twin_model.py implements the same equations with torch.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from utils.errors import ConfigError, DimensionError, InputError, LayoutError
from utils.photonic_core import (
    BALANCED_SPLIT,
    PCNN_LAYOUT,
    CrosstalkModel,
    MeshSpec,
    ParameterLayout,
    apply_crosstalk,
    attenuator_amplitude,
    build_clements_mesh,
    mesh_forward,
    realize_phases,
)

IMAGE_SIZE = 28
KERNEL = 3
CONV1_CHANNELS = 4
WDM_CHANNELS = 8
POOL_WINDOW = 2
POOL_STRIDE = 2
FC1_INPUTS = 200
FC1_WEIGHTS = 336
FC1_GROUPS = (11,) * 16 + (10,) * 16
FC2_GROUPS = (3,) * 8 + (2,) * 4
NOFU_RINGS = 32
READOUT_MODES = 10
N_CLASSES = 10


@dataclass
class FeatureMap:
    """Complex amplitudes of shape (..., C, H, W)."""

    values: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[-3]

    @property
    def height(self) -> int:
        return self.values.shape[-2]

    @property
    def width(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class HardwareProfile:
    """Calibration knobs shared by the twin and the hardware simulator."""

    insertion_loss: float = 1.0
    gst_attenuation: float = 1.0
    tap_factors: Tuple[float, ...] = (1.0,) * WDM_CHANNELS
    oeo_gain: float = 1.0
    oeo_bounds: Tuple[float, float] = (0.0, 1.0)
    splitting_ratio: float = BALANCED_SPLIT

    def __post_init__(self):
        if len(self.tap_factors) != WDM_CHANNELS:
            raise ConfigError(f"Need {WDM_CHANNELS} tap factors, got {len(self.tap_factors)}")
        if self.oeo_gain <= 0:
            raise ConfigError(f"O/E/O gain must be positive, got {self.oeo_gain}")
        low, high = self.oeo_bounds
        if not 0.0 <= low < high:
            raise ConfigError(f"Invalid O/E/O bounds: {self.oeo_bounds}")
        if not 0.0 < self.splitting_ratio < 1.0:
            raise ConfigError(f"Splitting ratio must be in (0, 1), got {self.splitting_ratio}")

    @classmethod
    def from_config(cls, config: Dict) -> "HardwareProfile":
        section = config.get("hardware", {})
        return cls(
            insertion_loss=float(section.get("insertion_loss", 1.0)),
            gst_attenuation=float(section.get("gst_attenuation", 1.0)),
            tap_factors=tuple(float(t) for t in section.get("tap_factors", (1.0,) * WDM_CHANNELS)),
            oeo_gain=float(section.get("oeo_gain", 1.0)),
            oeo_bounds=tuple(float(b) for b in section.get("oeo_bounds", (0.0, 1.0))),
            splitting_ratio=float(section.get("splitting_ratio", BALANCED_SPLIT)),
        )


@dataclass(frozen=True)
class NofuGlobals:
    """Fixed microring constants (not trained)."""

    dip_depth: float = 0.8
    linewidth: float = 0.5
    carrier_coeff: float = 2.0
    p_max: float = 1.0

    @classmethod
    def from_config(cls, config: Dict) -> "NofuGlobals":
        section = config.get("nofu", {})
        return cls(**{k: float(v) for k, v in section.items()})


@dataclass
class NofuParams:
    """Per-ring trainable values, stored interleaved (alpha_phase_i, delta_i) in the phase vector."""

    alpha_phase: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_slice(cls, values) -> "NofuParams":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (2 * NOFU_RINGS,):
            raise DimensionError(f"NOFU slice needs {2 * NOFU_RINGS} entries, got {values.shape}")
        return cls(values[0::2].copy(), values[1::2].copy())

    @property
    def alpha(self) -> np.ndarray:
        return np.sin(self.alpha_phase / 2) ** 2


def combiner_matrix(group_sizes: Sequence[int]) -> np.ndarray:
    """Fixed MMI combiner: contiguous disjoint groups summed with 1/sqrt(size)."""
    n_inputs = sum(group_sizes)
    matrix = np.zeros((len(group_sizes), n_inputs), dtype=np.float64)
    start = 0
    for g, size in enumerate(group_sizes):
        matrix[g, start:start + size] = 1.0 / np.sqrt(size)
        start += size
    return matrix


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Static PCNN topology and its mapping onto the global phase vector."""

    conv1_mesh: MeshSpec
    dw_meshes: Tuple[MeshSpec, ...]
    pw_mesh: MeshSpec
    fc1_mesh: MeshSpec
    fc2_mesh: MeshSpec
    fc1_combiner: np.ndarray = field(repr=False)
    fc2_combiner: np.ndarray = field(repr=False)
    layout: ParameterLayout = PCNN_LAYOUT
    fc1_weight_count: int = FC1_WEIGHTS
    nofu_count: int = NOFU_RINGS
    readout_modes: int = READOUT_MODES

    @property
    def segments(self) -> Dict[str, slice]:
        return _segments(self)

    @property
    def n_params(self) -> int:
        return self.layout.total

    def split(self, theta) -> Dict:
        """Named views of theta (numpy array or torch tensor)."""
        if len(theta) != self.layout.total:
            raise LayoutError(f"Phase vector must have {self.layout.total} entries, got {len(theta)}")
        return {name: theta[span] for name, span in self.segments.items()}

    def phase_mask(self) -> np.ndarray:
        """True where the entry is a heater phase, False for NOFU detuning biases."""
        mask = np.ones(self.layout.total, dtype=bool)
        nofu = self.segments["nofu"]
        mask[nofu.start + 1:nofu.stop:2] = False
        return mask

    def mac_layers(self) -> List[Tuple[str, int, int]]:
        """(name, N, K) per layer for the MAC count; FC2 uses N=10."""
        conv1_positions = (IMAGE_SIZE - KERNEL + 1) ** 2
        pooled = (IMAGE_SIZE - KERNEL + 1) // POOL_STRIDE
        conv2_positions = (pooled - KERNEL + 1) ** 2
        return [
            ("Conv1", self.conv1_mesh.n_modes, conv1_positions),
            ("Conv2-dw", self.dw_meshes[0].n_modes, len(self.dw_meshes) * conv2_positions),
            ("Conv2-pw", self.pw_mesh.n_modes, conv2_positions),
            ("FC1", self.fc1_mesh.n_modes, 1),
            ("FC2", self.readout_modes, 1),
        ]


@lru_cache(maxsize=None)
def _segments(spec: "NetworkSpec") -> Dict[str, slice]:
    sizes = [("conv1", spec.conv1_mesh.n_params)]
    sizes += [(f"dw{c}", mesh.n_params) for c, mesh in enumerate(spec.dw_meshes)]
    sizes += [
        ("pw", spec.pw_mesh.n_params),
        ("fc1_weights", spec.fc1_weight_count),
        ("fc1_mesh", spec.fc1_mesh.n_params),
        ("nofu", 2 * spec.nofu_count),
        ("fc2_mesh", spec.fc2_mesh.n_params),
    ]
    segments, cursor = {}, 0
    for name, size in sizes:
        segments[name] = slice(cursor, cursor + size)
        cursor += size
    return segments


@lru_cache(maxsize=None)
def build_network_spec() -> NetworkSpec:
    spec = NetworkSpec(
        conv1_mesh=build_clements_mesh(10),
        dw_meshes=tuple(build_clements_mesh(10) for _ in range(CONV1_CHANNELS)),
        pw_mesh=build_clements_mesh(WDM_CHANNELS),
        fc1_mesh=build_clements_mesh(len(FC1_GROUPS)),
        fc2_mesh=build_clements_mesh(len(FC2_GROUPS)),
        fc1_combiner=combiner_matrix(FC1_GROUPS),
        fc2_combiner=combiner_matrix(FC2_GROUPS),
    )
    segments = spec.segments
    for layer, first, last in (("Conv1", "conv1", "conv1"), ("Conv2", "dw0", "pw"),
                               ("FC1", "fc1_weights", "fc1_mesh"), ("NOFU", "nofu", "nofu"),
                               ("FC2", "fc2_mesh", "fc2_mesh")):
        span = spec.layout[layer]
        if (segments[first].start, segments[last].stop) != (span.start, span.stop):
            raise LayoutError(f"{layer} segments do not match layout range "
                              f"[{span.start}, {span.stop})")
    return spec


def init_phases(seed: int = 0, spec: Optional[NetworkSpec] = None,
                nofu: Optional["NofuGlobals"] = None) -> np.ndarray:
    """Random starting point: mesh phases in [-pi, pi), weight bank in [-pi/2, pi/2),
    NOFU taps at pi/2 (alpha = 0.5) and detuning biases at one linewidth."""
    spec = spec or build_network_spec()
    nofu = nofu or NofuGlobals()
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-np.pi, np.pi, spec.n_params)
    weights = spec.segments["fc1_weights"]
    theta[weights] = rng.uniform(-np.pi / 2, np.pi / 2, weights.stop - weights.start)
    ring_slice = spec.segments["nofu"]
    theta[ring_slice.start:ring_slice.stop:2] = np.pi / 2
    theta[ring_slice.start + 1:ring_slice.stop:2] = nofu.linewidth
    return theta


# --------------------------------------------------------------------------
# Layer operations
# --------------------------------------------------------------------------

def encode_image(pixels) -> np.ndarray:
    """Pixel values 0..255 to real amplitudes pixel/255."""
    pixels = np.asarray(pixels)
    if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
        raise InputError(f"Pixel values must be in [0, 255], got [{pixels.min()}, {pixels.max()}]")
    return pixels.astype(np.float64) / 255.0


def extract_patches(image, k: int = KERNEL, stride: int = 1) -> np.ndarray:
    """Row-major k x k patches of (..., H, W) -> (..., P, k*k)."""
    image = np.asarray(image)
    height, width = image.shape[-2:]
    if height < k or width < k:
        raise DimensionError(f"Image {height}x{width} is smaller than the {k}x{k} kernel")
    windows = sliding_window_view(image, (k, k), axis=(-2, -1))[..., ::stride, ::stride, :, :]
    return windows.reshape(*windows.shape[:-4], -1, k * k)


def conv_layer_forward(mesh: MeshSpec, phases, patches, pad_to: int,
                       out_modes: Sequence[int], profile: Optional[HardwareProfile] = None) -> np.ndarray:
    """Zero-pad each patch to N modes, propagate, read the selected output modes."""
    profile = profile or HardwareProfile()
    patches = np.asarray(patches)
    if pad_to != mesh.n_modes:
        raise DimensionError(f"pad_to={pad_to} does not match mesh size {mesh.n_modes}")
    if patches.shape[-1] > pad_to:
        raise DimensionError(f"Patch length {patches.shape[-1]} exceeds {pad_to} modes")
    padded = np.zeros(patches.shape[:-1] + (pad_to,), dtype=np.complex128)
    padded[..., :patches.shape[-1]] = patches
    out = mesh_forward(mesh, phases, padded, profile.splitting_ratio, profile.insertion_loss)
    return out[..., list(out_modes)]


def optical_maxpool(feature_map: Union[FeatureMap, np.ndarray], window: int = POOL_WINDOW,
                    stride: int = POOL_STRIDE, attenuation: float = 1.0):
    """Pass the highest-intensity amplitude of each window; ties go to row-major first."""
    if isinstance(feature_map, FeatureMap):
        return FeatureMap(optical_maxpool(feature_map.values, window, stride, attenuation))
    values = np.asarray(feature_map, dtype=np.complex128)
    height, width = values.shape[-2:]
    if height < window or width < window:
        raise DimensionError(f"Map {height}x{width} is smaller than the pooling window {window}")
    windows = sliding_window_view(values, (window, window), axis=(-2, -1))[..., ::stride, ::stride, :, :]
    flat = windows.reshape(*windows.shape[:-2], window * window)
    intensity = flat.real ** 2 + flat.imag ** 2
    winner = np.argmax(intensity, axis=-1)[..., None]
    pooled = np.take_along_axis(flat, winner, axis=-1)[..., 0]
    return pooled * attenuation if attenuation != 1.0 else pooled


def wdm_pool2(feature_map: Union[FeatureMap, np.ndarray],
              profile: Optional[HardwareProfile] = None):
    """Second pooling stage: channel c rides wavelength c, pooled independently."""
    profile = profile or HardwareProfile()
    values = feature_map.values if isinstance(feature_map, FeatureMap) else np.asarray(feature_map)
    if values.shape[-3] != WDM_CHANNELS:
        raise ConfigError(f"WDM pooling needs {WDM_CHANNELS} channels, got {values.shape[-3]}")
    pooled = optical_maxpool(values, attenuation=profile.gst_attenuation)
    taps = np.asarray(profile.tap_factors, dtype=np.float64)
    if np.any(taps != 1.0):
        pooled = pooled * taps[:, None, None]
    return FeatureMap(pooled) if isinstance(feature_map, FeatureMap) else pooled


def oeo_stage(fields, gain: float = 1.0, bounds: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Photodetect and re-modulate: y = sqrt(clip(gain*|z|^2, bounds)); phase is lost."""
    fields = np.asarray(fields)
    low, high = bounds
    return np.clip(np.sqrt(gain) * np.abs(fields), np.sqrt(low), np.sqrt(high))


def fc1_forward(weights, mesh_phases, inputs, spec: Optional[NetworkSpec] = None,
                profile: Optional[HardwareProfile] = None) -> np.ndarray:
    """Weight bank (336 attenuators) -> fixed 336->32 combiner -> 32-mode mesh."""
    spec = spec or build_network_spec()
    profile = profile or HardwareProfile()
    inputs = np.asarray(inputs)
    if inputs.shape[-1] != FC1_INPUTS:
        raise DimensionError(f"FC1 expects {FC1_INPUTS} inputs, got {inputs.shape[-1]}")
    padded = np.zeros(inputs.shape[:-1] + (spec.fc1_weight_count,), dtype=np.complex128)
    padded[..., :FC1_INPUTS] = inputs
    weighted = padded * attenuator_amplitude(weights)
    combined = weighted @ spec.fc1_combiner.T
    return mesh_forward(spec.fc1_mesh, mesh_phases, combined,
                        profile.splitting_ratio, profile.insertion_loss)


def nofu_forward(fields, params: NofuParams, constants: Optional[NofuGlobals] = None) -> np.ndarray:
    """Microring activation: tapped power detunes a Lorentzian dip."""
    constants = constants or NofuGlobals()
    fields = np.asarray(fields, dtype=np.complex128)
    alpha = params.alpha
    power = np.minimum(alpha * (fields.real ** 2 + fields.imag ** 2), constants.p_max)
    detuning = params.delta - constants.carrier_coeff * power
    transmission = 1.0 - constants.dip_depth / (1.0 + (detuning / constants.linewidth) ** 2)
    return fields * np.abs(np.cos(params.alpha_phase / 2)) * np.sqrt(transmission)


def fc2_forward(mesh_phases, inputs, spec: Optional[NetworkSpec] = None,
                profile: Optional[HardwareProfile] = None) -> np.ndarray:
    """Fixed 32->12 combiner, 12-mode mesh, intensities of modes 0-9."""
    spec = spec or build_network_spec()
    profile = profile or HardwareProfile()
    inputs = np.asarray(inputs, dtype=np.complex128)
    if inputs.shape[-1] != spec.fc2_combiner.shape[1]:
        raise DimensionError(f"FC2 expects {spec.fc2_combiner.shape[1]} inputs, got {inputs.shape[-1]}")
    combined = inputs @ spec.fc2_combiner.T
    out = mesh_forward(spec.fc2_mesh, mesh_phases, combined,
                       profile.splitting_ratio, profile.insertion_loss)
    readout = out[..., :spec.readout_modes]
    return readout.real ** 2 + readout.imag ** 2


def predict(scores) -> np.ndarray:
    """Arg-max class; ties go to the smallest index."""
    return np.argmax(np.asarray(scores), axis=-1)


def accuracy(scores, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(predict(scores) == labels))


# --------------------------------------------------------------------------
# Hardware simulator
# --------------------------------------------------------------------------

class HardwareSimulator:
    """Simulated chip: realizes phases, applies crosstalk and runs the optical pipeline."""

    def __init__(self, profile: Optional[HardwareProfile] = None,
                 nofu: Optional[NofuGlobals] = None,
                 crosstalk: Optional[CrosstalkModel] = None,
                 spec: Optional[NetworkSpec] = None):
        self.spec = spec or build_network_spec()
        self.profile = profile or HardwareProfile()
        self.nofu = nofu or NofuGlobals()
        self.crosstalk = crosstalk
        self._phase_mask = self.spec.phase_mask()

    def effective_phases(self, theta) -> np.ndarray:
        theta = self.spec.layout.validate(theta)
        return apply_crosstalk(realize_phases(theta, self._phase_mask), self.crosstalk)

    def forward(self, theta, images) -> np.ndarray:
        """Class scores (..., 10) for pixel images (..., 28, 28)."""
        images = np.asarray(images)
        single = images.ndim == 2
        if single:
            images = images[None]
        if images.shape[-2:] != (IMAGE_SIZE, IMAGE_SIZE):
            raise DimensionError(f"Expected {IMAGE_SIZE}x{IMAGE_SIZE} images, got {images.shape[-2:]}")

        phases = self.spec.split(self.effective_phases(theta))
        spec, profile = self.spec, self.profile
        batch = images.shape[0]

        amplitudes = encode_image(images)
        conv1 = conv_layer_forward(spec.conv1_mesh, phases["conv1"], extract_patches(amplitudes),
                                   spec.conv1_mesh.n_modes, range(CONV1_CHANNELS), profile)
        side = IMAGE_SIZE - KERNEL + 1
        conv1 = np.swapaxes(conv1, -1, -2).reshape(batch, CONV1_CHANNELS, side, side)
        pool1 = optical_maxpool(conv1, attenuation=profile.gst_attenuation)

        depthwise = []
        for c, mesh in enumerate(spec.dw_meshes):
            out = conv_layer_forward(mesh, phases[f"dw{c}"], extract_patches(pool1[:, c]),
                                     mesh.n_modes, [0], profile)
            depthwise.append(out[..., 0])
        depthwise = np.stack(depthwise, axis=1)
        pointwise = conv_layer_forward(spec.pw_mesh, phases["pw"], np.swapaxes(depthwise, 1, 2),
                                       spec.pw_mesh.n_modes, range(WDM_CHANNELS), profile)
        side2 = pool1.shape[-1] - KERNEL + 1
        conv2 = np.swapaxes(pointwise, 1, 2).reshape(batch, WDM_CHANNELS, side2, side2)

        pool2 = wdm_pool2(conv2, profile)
        detected = oeo_stage(pool2.reshape(batch, -1), profile.oeo_gain, profile.oeo_bounds)
        fc1 = fc1_forward(phases["fc1_weights"], phases["fc1_mesh"], detected, spec, profile)
        activated = nofu_forward(fc1, NofuParams.from_slice(phases["nofu"]), self.nofu)
        scores = fc2_forward(phases["fc2_mesh"], activated, spec, profile)
        return scores[0] if single else scores

    def scores(self, theta, images, batch_size: int = 256, progress: bool = False) -> np.ndarray:
        images = np.asarray(images)
        chunks = range(0, len(images), batch_size)
        if progress:
            chunks = tqdm(chunks, desc="Hardware inference", unit="batch")
        outputs = [self.forward(theta, images[i:i + batch_size]) for i in chunks]
        if not outputs:
            return np.zeros((0, N_CLASSES))
        return np.concatenate(outputs, axis=0)


def network_forward(theta, images, mode: str = "hardware",
                    crosstalk: Optional[CrosstalkModel] = None,
                    profile: Optional[HardwareProfile] = None,
                    nofu: Optional[NofuGlobals] = None) -> np.ndarray:
    """Class intensities from either the twin or the hardware path."""
    if mode == "hardware":
        return HardwareSimulator(profile, nofu, crosstalk).forward(theta, images)
    if mode == "twin":
        if crosstalk is not None and crosstalk.xt != 0.0:
            logging.info("Twin mode ignores crosstalk (xt=%s)", crosstalk.xt)
        from utils.twin_model import PhotonicTwin
        return PhotonicTwin(profile, nofu).scores(theta, images)
    raise ConfigError(f"Unknown forward mode: {mode} (expected 'twin' or 'hardware')")
