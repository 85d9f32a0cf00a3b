"""Analytical latency, power and energy model of the photonic chip.

Latency is dominated by streaming Conv1's 676 patches; power is the static
heater draw (|wrapped phase| / pi of P_pi per shifter) plus a fixed budget for
modulator drivers and everything else. Technology presets and GPU reference
rows reproduce the comparison tables.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import ConfigError
from utils.network_layers import NetworkSpec, build_network_spec
from utils.photonic_core import wrap_phase

REPORTED_N_OPS = 268_000
N_OPS_MODES = ("formula", "reported")
N_OPS_ALIASES = {"paper": "reported"}
CONV1_PATCHES = 676

DEFAULT_STAGE_LATENCIES_NS: Dict[str, float] = {
    "Pool1": 1.2,
    "Conv2": 121.0,
    "Pool2": 1.2,
    "OEO": 40.0,
    "FC1": 1.2,
    "NOFU": 1.2,
    "FC2": 1.2,
}

DEFAULT_FIXED_POWER_W: Dict[str, float] = {
    "modulator_drivers": 3.0,
    "other": 1.4,
}


# --------------------------------------------------------------------------
# Technology presets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TechnologyPreset:
    name: str
    p_pi: float
    fixed_power: Tuple[Tuple[str, float], ...]
    description: str = ""

    @property
    def p_fixed(self) -> float:
        return sum(value for _, value in self.fixed_power)


TECHNOLOGY_PRESETS: Dict[str, TechnologyPreset] = {
    "standard": TechnologyPreset(
        "standard", 0.010, (("modulator_drivers", 3.0), ("other", 1.4)),
        "Standard thermo-optic heaters"),
    "undercut": TechnologyPreset(
        "undercut", 0.003, (("modulator_drivers", 0.0), ("other", 1.4)),
        "Undercut silicon heaters"),
    # 1.3 W puts this row at 2.3 W total and 7.3 pJ/OP.
    "suspended": TechnologyPreset(
        "suspended", 0.001, (("modulator_drivers", 0.0), ("other", 1.3)),
        "Suspended silicon heaters"),
    "mems": TechnologyPreset(
        "mems", 1e-5, (("modulator_drivers", 0.0), ("other", 1.4)),
        "MEMS phase shifters"),
}

PRESET_ALIASES: Dict[str, str] = {
    "thermo-optic": "standard",
    "to": "standard",
    "default": "standard",
    "undercut-si": "undercut",
    "suspended-si": "suspended",
    "mems-based": "mems",
}

PRESET_CATEGORIES = {
    "Thermo-optic": ["standard", "undercut", "suspended"],
    "Mechanical": ["mems"],
}


def resolve_preset(name: str) -> TechnologyPreset:
    """Look a preset up by canonical name or alias (case-insensitive)."""
    key = name.strip().lower()
    key = PRESET_ALIASES.get(key, key)
    if key not in TECHNOLOGY_PRESETS:
        known = ", ".join(sorted(TECHNOLOGY_PRESETS) + sorted(PRESET_ALIASES))
        raise ConfigError(f"Unknown technology preset: {name} (known: {known})")
    return TECHNOLOGY_PRESETS[key]


def list_presets() -> List[str]:
    lines = []
    for category, names in PRESET_CATEGORIES.items():
        lines.append(f"{category}:")
        for name in names:
            preset = TECHNOLOGY_PRESETS[name]
            aliases = sorted(a for a, target in PRESET_ALIASES.items() if target == name)
            alias_text = f"  (aliases: {', '.join(aliases)})" if aliases else ""
            lines.append(f"  {name:<10} P_pi={preset.p_pi * 1e3:g} mW  "
                         f"P_fixed={preset.p_fixed:g} W  {preset.description}{alias_text}")
    return lines


# --------------------------------------------------------------------------
# Config and report
# --------------------------------------------------------------------------

@dataclass
class PerfConfig:
    tau_patch_ns: float = 1.0
    stage_latencies_ns: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_STAGE_LATENCIES_NS))
    p_pi: float = 0.010
    fixed_power_w: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_FIXED_POWER_W))
    heater_reference_w: float = 10.3
    reference_p_pi: float = 0.010
    n_ops_mode: str = "formula"
    reported_n_ops: int = REPORTED_N_OPS

    def __post_init__(self):
        values = [self.tau_patch_ns, self.p_pi, self.heater_reference_w, self.reported_n_ops,
                  *self.stage_latencies_ns.values(), *self.fixed_power_w.values()]
        if any(v < 0 for v in values):
            raise ConfigError("Perf model entries must be non-negative")
        if self.reference_p_pi <= 0:
            raise ConfigError(f"reference_p_pi must be positive, got {self.reference_p_pi}")
        self.n_ops_mode = N_OPS_ALIASES.get(self.n_ops_mode, self.n_ops_mode)
        if self.n_ops_mode not in N_OPS_MODES:
            raise ConfigError(f"n_ops_mode must be one of {N_OPS_MODES + tuple(N_OPS_ALIASES)}, "
                              f"got {self.n_ops_mode}")

    @property
    def p_fixed(self) -> float:
        return float(sum(self.fixed_power_w.values()))

    @classmethod
    def from_config(cls, config: Dict) -> "PerfConfig":
        section = dict(config.get("perf", {}))
        perf = cls(
            tau_patch_ns=float(section.get("tau_patch_ns", 1.0)),
            stage_latencies_ns={k: float(v) for k, v in
                                section.get("stage_latencies_ns", DEFAULT_STAGE_LATENCIES_NS).items()},
            p_pi=float(section.get("p_pi", 0.010)),
            fixed_power_w={k: float(v) for k, v in
                           section.get("fixed_power_w", DEFAULT_FIXED_POWER_W).items()},
            heater_reference_w=float(section.get("heater_reference_w", 10.3)),
            reference_p_pi=float(section.get("reference_p_pi", 0.010)),
            n_ops_mode=str(section.get("n_ops_mode", "formula")),
            reported_n_ops=int(section.get("reported_n_ops", REPORTED_N_OPS)),
        )
        preset = section.get("preset")
        return perf.with_preset(resolve_preset(preset)) if preset else perf

    def with_preset(self, preset: TechnologyPreset) -> "PerfConfig":
        return replace(self, p_pi=preset.p_pi, fixed_power_w=dict(preset.fixed_power))


@dataclass
class PerfReport:
    n_ops: int
    latency_ns: float
    p_heater: float
    p_fixed: float
    p_total: float
    energy_inference: float
    e_op: float
    tops: float

    def to_dict(self) -> Dict:
        return asdict(self)


# --------------------------------------------------------------------------
# Model equations
# --------------------------------------------------------------------------

MacLayers = Iterable[Tuple[str, int, int]]


def count_macs(network: Union[NetworkSpec, MacLayers, None] = None) -> int:
    """Sum of 2 * N^2 * K over the (name, N, K) layers."""
    if network is None:
        network = build_network_spec()
    layers = network.mac_layers() if isinstance(network, NetworkSpec) else network
    return int(sum(2 * n * n * k for _, n, k in layers))


def latency(config: Optional[PerfConfig] = None) -> float:
    """End-to-end latency in ns: Conv1 patch streaming plus the other stages."""
    config = config or PerfConfig()
    return CONV1_PATCHES * config.tau_patch_ns + float(sum(config.stage_latencies_ns.values()))


def heater_power(theta, p_pi: float = 0.010) -> float:
    """Static heater draw in W for every entry of theta."""
    theta = np.asarray(theta, dtype=np.float64)
    return float(p_pi * np.sum(np.abs(wrap_phase(theta))) / np.pi)


def _heater_or_reference(theta, config: PerfConfig) -> float:
    if theta is None:
        return config.heater_reference_w * config.p_pi / config.reference_p_pi
    return heater_power(theta, config.p_pi)


def total_power(theta=None, config: Optional[PerfConfig] = None) -> float:
    config = config or PerfConfig()
    return _heater_or_reference(theta, config) + config.p_fixed


def n_ops_for(config: PerfConfig, network: Optional[NetworkSpec] = None) -> int:
    return config.reported_n_ops if config.n_ops_mode == "reported" else count_macs(network)


def build_report(p_total: float, latency_ns: float, n_ops: int,
                 p_heater: float = 0.0, p_fixed: Optional[float] = None) -> PerfReport:
    seconds = latency_ns * 1e-9
    energy = p_total * seconds
    return PerfReport(
        n_ops=int(n_ops),
        latency_ns=float(latency_ns),
        p_heater=float(p_heater),
        p_fixed=float(p_total - p_heater if p_fixed is None else p_fixed),
        p_total=float(p_total),
        energy_inference=energy,
        e_op=energy / n_ops if n_ops else float("inf"),
        tops=n_ops / seconds / 1e12 if seconds else float("inf"),
    )


def perf_report(theta=None, network: Optional[NetworkSpec] = None,
                config: Optional[PerfConfig] = None) -> PerfReport:
    config = config or PerfConfig()
    heater = _heater_or_reference(theta, config)
    return build_report(heater + config.p_fixed, latency(config), n_ops_for(config, network),
                        p_heater=heater, p_fixed=config.p_fixed)


@dataclass
class TechnologyRow:
    name: str
    p_pi: float
    p_total: float
    e_op: float
    tops: float


def technology_table(theta=None, presets: Optional[Sequence[str]] = None,
                     config: Optional[PerfConfig] = None,
                     network: Optional[NetworkSpec] = None) -> List[TechnologyRow]:
    config = config or PerfConfig()
    rows = []
    for name in presets or list(TECHNOLOGY_PRESETS):
        preset = resolve_preset(name)
        report = perf_report(theta, network, config.with_preset(preset))
        rows.append(TechnologyRow(preset.name, preset.p_pi, report.p_total, report.e_op, report.tops))
    return rows


@dataclass(frozen=True)
class GpuReference:
    name: str
    power_w: float
    latency_s: float

    @property
    def energy(self) -> float:
        return self.power_w * self.latency_s


GPU_REFERENCE: Tuple[GpuReference, ...] = (
    GpuReference("NVIDIA T4", 40.0, 50e-6),
    GpuReference("NVIDIA H100", 200.0, 10e-6),
    GpuReference("NVIDIA A100", 150.0, 20e-6),
)


@dataclass
class GpuRow:
    name: str
    power_w: float
    latency_us: float
    energy_uj: float
    ratio: float


def gpu_comparison(report: PerfReport,
                   references: Sequence[GpuReference] = GPU_REFERENCE) -> List[GpuRow]:
    """Energy per inference against GPU rows; ratio = reference energy / PCNN energy."""
    rows = [GpuRow("PCNN", report.p_total, report.latency_ns * 1e-3,
                   report.energy_inference * 1e6, 1.0)]
    for ref in references:
        rows.append(GpuRow(ref.name, ref.power_w, ref.latency_s * 1e6, ref.energy * 1e6,
                           ref.energy / report.energy_inference))
    return rows


def format_perf_tables(report: PerfReport, tech_rows: Sequence[TechnologyRow],
                       gpu_rows: Sequence[GpuRow]) -> str:
    lines = ["PCNN performance", "=" * 60]
    lines += [
        f"{'N_OPS (MAC)':<24}{report.n_ops:>14,d}",
        f"{'Latency':<24}{report.latency_ns:>14.1f} ns",
        f"{'Heater power':<24}{report.p_heater:>14.3f} W",
        f"{'Fixed power':<24}{report.p_fixed:>14.3f} W",
        f"{'Total power':<24}{report.p_total:>14.3f} W",
        f"{'Energy / inference':<24}{report.energy_inference * 1e6:>14.3f} uJ",
        f"{'Energy / OP':<24}{report.e_op * 1e12:>14.2f} pJ",
        f"{'Throughput':<24}{report.tops:>14.3f} TOPS",
        "",
        "Phase shifter technologies",
        "-" * 60,
        f"{'Preset':<12}{'P_pi (mW)':>12}{'P_total (W)':>14}{'E_op (pJ)':>12}{'TOPS':>10}",
    ]
    for row in tech_rows:
        lines.append(f"{row.name:<12}{row.p_pi * 1e3:>12g}{row.p_total:>14.2f}"
                     f"{row.e_op * 1e12:>12.2f}{row.tops:>10.3f}")
    lines += [
        "",
        "Single-inference energy vs GPUs",
        "-" * 60,
        f"{'Device':<14}{'Power (W)':>10}{'Latency (us)':>14}{'Energy (uJ)':>13}{'Ratio':>9}",
    ]
    for row in gpu_rows:
        lines.append(f"{row.name:<14}{row.power_w:>10.1f}{row.latency_us:>14.3f}"
                     f"{row.energy_uj:>13.2f}{row.ratio:>8.0f}x")
    return "\n".join(lines) + "\n"
