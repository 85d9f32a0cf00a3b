"""Differentiable digital twin of the PCNN in torch.

Same equations as the hardware simulator in utils/network_layers.py, written
with complex128 torch ops so reverse-mode autograd yields d(loss)/d(theta) for
all 2,132 phases. The twin never applies crosstalk.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from utils.errors import DimensionError, LayoutError, NumericError
from utils.network_layers import (
    CONV1_CHANNELS,
    FC1_INPUTS,
    IMAGE_SIZE,
    KERNEL,
    N_CLASSES,
    WDM_CHANNELS,
    HardwareProfile,
    HardwareSimulator,
    NetworkSpec,
    NofuGlobals,
    build_network_spec,
)
from utils.photonic_core import BALANCED_SPLIT, MeshSpec, mzi_transfer

DEFAULT_S_SCALE = 10.0


@dataclass
class LossRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float

    def __post_init__(self):
        for name in ("train_acc", "test_acc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def mzi_coefficients(theta: torch.Tensor, phi: torch.Tensor,
                     splitting_ratio: float = BALANCED_SPLIT):
    external = torch.exp(1j * phi)
    if splitting_ratio == BALANCED_SPLIT:
        prefactor = 1j * torch.exp(0.5j * theta)
        s = torch.sin(theta / 2)
        c = torch.cos(theta / 2)
        return prefactor * external * s, prefactor * c, prefactor * external * c, -prefactor * s

    t = math.sqrt(splitting_ratio)
    k = math.sqrt(1.0 - splitting_ratio)
    internal = torch.exp(1j * theta)
    cross = 1j * t * k * (internal + 1.0)
    return ((t * t * internal - k * k) * external, cross,
            cross * external, t * t - k * k * internal)


def mesh_transfer(mesh: MeshSpec, phases: torch.Tensor,
                  splitting_ratio: float = BALANCED_SPLIT) -> torch.Tensor:
    """Composed transfer matrix U (output = U @ input), differentiable in phases."""
    if phases.shape != (mesh.n_params,):
        raise DimensionError(f"Mesh with {mesh.n_modes} modes needs {mesh.n_params} phases, "
                             f"got {tuple(phases.shape)}")
    out = torch.eye(mesh.n_modes, dtype=torch.complex128)
    for column in mesh.columns:
        theta = phases[torch.as_tensor(column.theta_slots)]
        phi = phases[torch.as_tensor(column.phi_slots)]
        a, b, c, d = mzi_coefficients(theta, phi, splitting_ratio)
        uppers = torch.as_tensor(column.uppers)
        lowers = torch.as_tensor(column.lowers)
        upper = out[:, uppers]
        lower = out[:, lowers]
        out = out.clone()
        out[:, uppers] = a * upper + b * lower
        out[:, lowers] = c * upper + d * lower
    out = out * torch.exp(1j * phases[torch.as_tensor(mesh.output_phase_slots)])
    return out.T


def _apply_mesh(mesh: MeshSpec, phases: torch.Tensor, fields: torch.Tensor,
                profile: HardwareProfile) -> torch.Tensor:
    out = fields @ mesh_transfer(mesh, phases, profile.splitting_ratio).T
    if profile.insertion_loss != 1.0:
        out = out * profile.insertion_loss
    return out


def _patches(values: torch.Tensor, k: int = KERNEL, stride: int = 1) -> torch.Tensor:
    windows = values.unfold(-2, k, stride).unfold(-2, k, stride)
    return windows.reshape(*windows.shape[:-4], -1, k * k)


def _pad_modes(values: torch.Tensor, n_modes: int) -> torch.Tensor:
    values = values.to(torch.complex128)
    missing = n_modes - values.shape[-1]
    if missing < 0:
        raise DimensionError(f"Vector length {values.shape[-1]} exceeds {n_modes} modes")
    if missing == 0:
        return values
    zeros = torch.zeros(values.shape[:-1] + (missing,), dtype=torch.complex128)
    return torch.cat([values, zeros], dim=-1)


def optical_maxpool(values: torch.Tensor, window: int = 2, stride: int = 2,
                    attenuation: float = 1.0) -> torch.Tensor:
    """Winner-take-all pooling; gradient reaches only the selected element."""
    windows = values.unfold(-2, window, stride).unfold(-2, window, stride)
    flat = windows.reshape(*windows.shape[:-2], window * window)
    intensity = flat.real ** 2 + flat.imag ** 2
    winner = intensity.argmax(dim=-1, keepdim=True)
    pooled = torch.complex(torch.gather(flat.real, -1, winner),
                           torch.gather(flat.imag, -1, winner)).squeeze(-1)
    return pooled * attenuation if attenuation != 1.0 else pooled


def cross_entropy(scores: torch.Tensor, labels: torch.Tensor,
                  s_scale: float = DEFAULT_S_SCALE) -> torch.Tensor:
    """Mean softmax cross-entropy of s_scale * scores."""
    return F.cross_entropy(s_scale * scores, labels.long())


def loss(scores, label: int, s_scale: float = DEFAULT_S_SCALE) -> float:
    """Cross-entropy of a single 10-score vector against its label."""
    scores = torch.as_tensor(np.asarray(scores, dtype=np.float64))
    return float(cross_entropy(scores[None], torch.tensor([int(label)]), s_scale))


class PhotonicTwin:
    """torch mirror of HardwareSimulator without crosstalk."""

    def __init__(self, profile: Optional[HardwareProfile] = None,
                 nofu: Optional[NofuGlobals] = None,
                 spec: Optional[NetworkSpec] = None,
                 s_scale: float = DEFAULT_S_SCALE,
                 check_finite: bool = True):
        self.spec = spec or build_network_spec()
        self.profile = profile or HardwareProfile()
        self.nofu = nofu or NofuGlobals()
        self.s_scale = s_scale
        self.check_finite = check_finite
        self._fc1_combiner = torch.as_tensor(self.spec.fc1_combiner)
        self._fc2_combiner = torch.as_tensor(self.spec.fc2_combiner).to(torch.complex128)
        self._taps = torch.tensor(self.profile.tap_factors, dtype=torch.float64)

    def _check(self, layer: str, values: torch.Tensor) -> torch.Tensor:
        if self.check_finite and not torch.isfinite(values).all():
            raise NumericError(layer)
        return values

    def forward(self, theta: torch.Tensor, images: torch.Tensor) -> torch.Tensor:
        """Scores (B, 10) for pixel images (B, 28, 28)."""
        if theta.shape != (self.spec.n_params,):
            raise LayoutError(f"Phase vector must have {self.spec.n_params} entries, "
                              f"got {tuple(theta.shape)}")
        if images.shape[-2:] != (IMAGE_SIZE, IMAGE_SIZE):
            raise DimensionError(f"Expected {IMAGE_SIZE}x{IMAGE_SIZE} images, got {tuple(images.shape)}")
        spec, profile = self.spec, self.profile
        phases = spec.split(theta)
        batch = images.shape[0]
        check = self._check

        amplitudes = images.to(torch.float64) / 255.0
        patches = _pad_modes(_patches(amplitudes), spec.conv1_mesh.n_modes)
        conv1 = _apply_mesh(spec.conv1_mesh, phases["conv1"], patches, profile)[..., :CONV1_CHANNELS]
        side = IMAGE_SIZE - KERNEL + 1
        conv1 = check("Conv1", conv1.transpose(-1, -2).reshape(batch, CONV1_CHANNELS, side, side))
        pool1 = check("Pool1", optical_maxpool(conv1, attenuation=profile.gst_attenuation))

        depthwise = []
        for c, mesh in enumerate(spec.dw_meshes):
            patches = _pad_modes(_patches(pool1[:, c]), mesh.n_modes)
            depthwise.append(_apply_mesh(mesh, phases[f"dw{c}"], patches, profile)[..., 0])
        depthwise = torch.stack(depthwise, dim=1)
        pointwise = _apply_mesh(spec.pw_mesh, phases["pw"],
                                _pad_modes(depthwise.transpose(1, 2), spec.pw_mesh.n_modes), profile)
        side2 = pool1.shape[-1] - KERNEL + 1
        conv2 = check("Conv2", pointwise.transpose(1, 2).reshape(batch, WDM_CHANNELS, side2, side2))

        pool2 = optical_maxpool(conv2, attenuation=profile.gst_attenuation)
        if bool((self._taps != 1.0).any()):
            pool2 = pool2 * self._taps[:, None, None]
        pool2 = check("Pool2", pool2)

        low, high = profile.oeo_bounds
        detected = torch.clamp(math.sqrt(profile.oeo_gain) * torch.abs(pool2.reshape(batch, -1)),
                               math.sqrt(low), math.sqrt(high))
        detected = check("OEO", detected)

        padded = torch.cat([detected, torch.zeros(batch, spec.fc1_weight_count - FC1_INPUTS,
                                                  dtype=torch.float64)], dim=-1)
        weighted = padded * torch.abs(torch.cos(phases["fc1_weights"] / 2))
        combined = (weighted @ self._fc1_combiner.T).to(torch.complex128)
        fc1 = check("FC1", _apply_mesh(spec.fc1_mesh, phases["fc1_mesh"], combined, profile))

        nofu_slice = phases["nofu"]
        alpha_phase, delta = nofu_slice[0::2], nofu_slice[1::2]
        alpha = torch.sin(alpha_phase / 2) ** 2
        constants = self.nofu
        power = torch.clamp(alpha * (fc1.real ** 2 + fc1.imag ** 2), max=constants.p_max)
        detuning = delta - constants.carrier_coeff * power
        transmission = 1.0 - constants.dip_depth / (1.0 + (detuning / constants.linewidth) ** 2)
        activated = check("NOFU", fc1 * torch.abs(torch.cos(alpha_phase / 2)) * torch.sqrt(transmission))

        fc2 = _apply_mesh(spec.fc2_mesh, phases["fc2_mesh"], activated @ self._fc2_combiner.T, profile)
        readout = fc2[..., :spec.readout_modes]
        return check("FC2", readout.real ** 2 + readout.imag ** 2)

    def loss(self, theta: torch.Tensor, images: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        return cross_entropy(self.forward(theta, images), labels, self.s_scale)

    @torch.no_grad()
    def scores(self, theta, images, batch_size: int = 256) -> np.ndarray:
        theta_t = torch.as_tensor(np.asarray(theta, dtype=np.float64))
        images = np.asarray(images)
        single = images.ndim == 2
        if single:
            images = images[None]
        outputs = [self.forward(theta_t, torch.as_tensor(images[i:i + batch_size])).numpy()
                   for i in range(0, len(images), batch_size)]
        result = np.concatenate(outputs, axis=0) if outputs else np.zeros((0, N_CLASSES))
        return result[0] if single else result

    def backward(self, theta, images, labels) -> Tuple[float, np.ndarray]:
        """Mean loss and exact gradient with respect to every phase."""
        theta_t = torch.tensor(np.asarray(theta, dtype=np.float64), requires_grad=True)
        images = np.asarray(images)
        labels = np.atleast_1d(np.asarray(labels))
        if images.ndim == 2:
            images = images[None]
        value = self.loss(theta_t, torch.as_tensor(images), torch.as_tensor(labels))
        value.backward()
        grad = theta_t.grad
        if not torch.isfinite(grad).all():
            bad = int(torch.nonzero(~torch.isfinite(grad))[0, 0])
            raise NumericError(self.spec.layout.layer_of(bad).name, "non-finite gradient")
        return float(value.detach()), grad.numpy().copy()


def backward(theta, image, label, twin: Optional[PhotonicTwin] = None) -> Tuple[float, np.ndarray]:
    return (twin or PhotonicTwin()).backward(theta, image, label)


def transfer_phases(theta_twin) -> np.ndarray:
    """1-to-1 phase transfer from twin to hardware: a validated copy."""
    layout = build_network_spec().layout
    return layout.validate(np.array(theta_twin, dtype=np.float64, copy=True)).copy()


def parity_check(theta, images, profile: Optional[HardwareProfile] = None,
                 nofu: Optional[NofuGlobals] = None,
                 hardware: Optional[HardwareSimulator] = None,
                 batch_size: int = 256) -> float:
    """Largest |twin - hardware| score difference over the sample images."""
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    if len(images) == 0:
        raise DimensionError("parity_check needs at least one image")
    hardware = hardware or HardwareSimulator(profile, nofu)
    twin = PhotonicTwin(hardware.profile, hardware.nofu, hardware.spec)
    twin_scores = twin.scores(theta, images, batch_size)
    hardware_scores = hardware.scores(theta, images, batch_size)
    return float(np.max(np.abs(twin_scores - hardware_scores)))


def mzi_parity(n_samples: int = 1000, seed: int = 0,
               splitting_ratio: float = BALANCED_SPLIT) -> float:
    """Largest entry difference between the twin's and the simulator's MZI matrices."""
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(-np.pi, np.pi, n_samples)
    phis = rng.uniform(-np.pi, np.pi, n_samples)
    a, b, c, d = mzi_coefficients(torch.as_tensor(thetas), torch.as_tensor(phis), splitting_ratio)
    twin = torch.stack([torch.stack([a, b], dim=-1), torch.stack([c, d], dim=-1)], dim=-2).numpy()
    hardware = np.stack([mzi_transfer(t, p, splitting_ratio) for t, p in zip(thetas, phis)])
    return float(np.max(np.abs(twin - hardware)))
