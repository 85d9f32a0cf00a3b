"""In-situ fine-tuning with simultaneous perturbation stochastic approximation.

Each iteration draws one Rademacher direction over all 2,132 phases, measures
the training objective at theta + delta and theta - delta on the crosstalk
perturbed hardware, and moves every phase along delta scaled by its layer's
learning-rate multiplier.
"""

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, List, Optional

import numpy as np
import torch
from tqdm import tqdm

from utils.errors import ConfigError, DimensionError
from utils.network_layers import HardwareSimulator, accuracy
from utils.photonic_core import PCNN_LAYOUT, ParameterLayout
from utils.twin_model import DEFAULT_S_SCALE, cross_entropy

DEFAULT_MULTIPLIERS: Dict[str, float] = {
    "Conv1": 0.3,
    "Conv2": 0.5,
    "FC1": 1.0,
    "NOFU": 2.0,
    "FC2": 3.0,
}

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SpsaDecay:
    """Gain schedule eta_k = eta / (k + 1 + A)^alpha, c_k = c / (k + 1)^gamma."""

    A: float = 0.0
    alpha: float = 0.602
    gamma: float = 0.101

    @classmethod
    def from_config(cls, section: Dict) -> "SpsaDecay":
        if not isinstance(section, dict):
            raise ConfigError(f"spsa.decay must be a mapping, got {type(section).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(section) - known)
        if unknown:
            raise ConfigError(f"Unknown spsa.decay keys: {unknown} (expected {sorted(known)})")
        try:
            return cls(**{key: float(value) for key, value in section.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Invalid spsa.decay value: {exc}") from exc


@dataclass
class SpsaConfig:
    eta: float = 0.02
    c: float = 0.01
    iterations: int = 100
    batch: int = 64
    seed: int = 0
    eval_every: int = 10
    multipliers: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MULTIPLIERS))
    decay: Optional[SpsaDecay] = None

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"SPSA perturbation c must be positive, got {self.c}")
        if not self.eta > 0:
            raise ConfigError(f"SPSA learning rate eta must be positive, got {self.eta}")
        if self.iterations < 0 or self.batch < 1 or self.eval_every < 1:
            raise ConfigError("SPSA iterations must be >= 0, batch and eval_every >= 1")
        if any(m < 0 for m in self.multipliers.values()):
            raise ConfigError(f"Layer multipliers must be non-negative: {self.multipliers}")

    @classmethod
    def from_config(cls, config: Dict, seed: Optional[int] = None) -> "SpsaConfig":
        section = dict(config.get("spsa", {}))
        decay = section.pop("decay", None)
        return cls(
            eta=float(section.get("eta", 0.02)),
            c=float(section.get("c", 0.01)),
            iterations=int(section.get("iterations", 100)),
            batch=int(section.get("batch", 64)),
            seed=int(seed if seed is not None else config.get("seed", 0)),
            eval_every=int(section.get("eval_every", 10)),
            multipliers={k: float(v) for k, v in section.get("multipliers", DEFAULT_MULTIPLIERS).items()},
            decay=SpsaDecay.from_config(decay) if decay else None,
        )

    def gains(self, iteration: int):
        """(eta_k, c_k) for this iteration."""
        if self.decay is None:
            return self.eta, self.c
        k = iteration + 1
        return (self.eta / (k + self.decay.A) ** self.decay.alpha,
                self.c / k ** self.decay.gamma)


def multiplier_vector(multipliers: Dict[str, float],
                      layout: ParameterLayout = PCNN_LAYOUT) -> np.ndarray:
    """Per-index multiplier m_i from the per-layer table."""
    missing = [name for name in layout.names if name not in multipliers]
    if missing:
        raise ConfigError(f"Multipliers missing for layers: {', '.join(missing)}")
    unknown = sorted(set(multipliers) - set(layout.names))
    if unknown:
        raise ConfigError(f"Multipliers given for unknown layers: {', '.join(unknown)}")
    vector = np.empty(layout.total, dtype=np.float64)
    for layer in layout.ranges:
        vector[layer.as_slice()] = multipliers[layer.name]
    return vector


def sample_perturbation(config: SpsaConfig, iteration: int,
                        size: int = PCNN_LAYOUT.total) -> np.ndarray:
    """Rademacher direction times c_k; a pure function of (seed, iteration)."""
    rng = np.random.default_rng([config.seed, iteration])
    signs = rng.integers(0, 2, size=size) * 2 - 1
    return config.gains(iteration)[1] * signs.astype(np.float64)


def _two_sided(objective: Objective, theta: np.ndarray, delta: np.ndarray):
    theta = np.asarray(theta, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if theta.shape != delta.shape:
        raise DimensionError(f"Perturbation shape {delta.shape} does not match theta {theta.shape}")
    norm = float(np.linalg.norm(delta))
    if norm == 0.0:
        raise DimensionError("SPSA perturbation must be nonzero")
    loss_plus = float(objective(theta + delta))
    loss_minus = float(objective(theta - delta))
    return (loss_plus - loss_minus) / (2.0 * norm), loss_plus, loss_minus


def directional_derivative(objective: Objective, theta, delta) -> float:
    """(L(theta + delta) - L(theta - delta)) / (2 ||delta||) from exactly two evaluations."""
    return _two_sided(objective, theta, delta)[0]


@dataclass
class SpsaStepResult:
    theta: np.ndarray
    gradient: float
    loss_plus: float
    loss_minus: float
    skipped: bool = False


def spsa_step(theta, config: SpsaConfig, iteration: int, objective: Objective,
              multipliers: Optional[np.ndarray] = None) -> SpsaStepResult:
    theta = np.asarray(theta, dtype=np.float64)
    if multipliers is None:
        multipliers = multiplier_vector(config.multipliers)
    delta = sample_perturbation(config, iteration, theta.size)
    g, loss_plus, loss_minus = _two_sided(objective, theta, delta)
    if not math.isfinite(g):
        logging.warning("SPSA iteration %d: non-finite directional derivative "
                        "(L+=%s, L-=%s), step skipped", iteration, loss_plus, loss_minus)
        return SpsaStepResult(theta.copy(), g, loss_plus, loss_minus, skipped=True)
    eta = config.gains(iteration)[0]
    return SpsaStepResult(theta - eta * multipliers * g * delta, g, loss_plus, loss_minus)


class HardwareObjective:
    """Mean batch cross-entropy on the hardware path; counts forward passes."""

    def __init__(self, hardware: HardwareSimulator, s_scale: float = DEFAULT_S_SCALE):
        self.hardware = hardware
        self.s_scale = s_scale
        self.calls = 0
        self._images = None
        self._labels = None

    def set_batch(self, images, labels):
        self._images = np.asarray(images)
        self._labels = torch.as_tensor(np.asarray(labels, dtype=np.int64))

    def __call__(self, theta) -> float:
        if self._images is None:
            raise DimensionError("HardwareObjective has no batch; call set_batch first")
        self.calls += 1
        scores = torch.as_tensor(self.hardware.forward(theta, self._images))
        return float(cross_entropy(scores, self._labels, self.s_scale))


@dataclass
class SpsaTraceRow:
    iteration: int
    train_loss_plus: float
    train_loss_minus: float
    test_acc: Optional[float] = None
    skipped: bool = False


@dataclass
class FinetuneResult:
    theta: np.ndarray
    final_theta: np.ndarray
    trace: List[SpsaTraceRow]
    initial_accuracy: float
    best_accuracy: float
    best_iteration: int
    forward_passes: int
    eval_passes: int

    @property
    def skipped_steps(self) -> int:
        return sum(1 for row in self.trace if row.skipped)


def finetune(theta, train_set, test_set, hardware: HardwareSimulator,
             config: Optional[SpsaConfig] = None, s_scale: float = DEFAULT_S_SCALE,
             progress: bool = True) -> FinetuneResult:
    """Run SPSA on the hardware; returns the best test-accuracy phases seen."""
    config = config or SpsaConfig()
    theta = hardware.spec.layout.validate(theta).copy()
    multipliers = multiplier_vector(config.multipliers, hardware.spec.layout)
    objective = HardwareObjective(hardware, s_scale)
    eval_passes = 0

    def evaluate(current) -> float:
        nonlocal eval_passes
        eval_passes += len(test_set.images)
        return accuracy(hardware.scores(current, test_set.images), test_set.labels)

    initial = evaluate(theta)
    best_theta, best_acc, best_iteration = theta.copy(), initial, 0
    trace: List[SpsaTraceRow] = []
    n_train = len(train_set.images)
    batch = min(config.batch, n_train)

    iterations = range(1, config.iterations + 1)
    if progress:
        iterations = tqdm(iterations, desc="SPSA fine-tuning", unit="iter")
    for iteration in iterations:
        rng = np.random.default_rng([config.seed, iteration, 1])
        picked = rng.choice(n_train, size=batch, replace=False)
        objective.set_batch(train_set.images[picked], train_set.labels[picked])

        step = spsa_step(theta, config, iteration, objective, multipliers)
        theta = step.theta
        row = SpsaTraceRow(iteration, step.loss_plus, step.loss_minus, skipped=step.skipped)
        if iteration % config.eval_every == 0 or iteration == config.iterations:
            row.test_acc = evaluate(theta)
            if row.test_acc > best_acc:
                best_theta, best_acc, best_iteration = theta.copy(), row.test_acc, iteration
        trace.append(row)

    return FinetuneResult(
        theta=best_theta,
        final_theta=theta,
        trace=trace,
        initial_accuracy=initial,
        best_accuracy=best_acc,
        best_iteration=best_iteration,
        forward_passes=objective.calls,
        eval_passes=eval_passes,
    )
