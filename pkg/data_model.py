#!/usr/bin/env python3
"""
Data model for the cell-free FL lab.

Configuration layer: the experiment file maps onto ExperimentConfig and its
sections (system, channel, quantization, schedule, privacy, solver, training,
sweep). Each section validates its own invariants.

Results layer: flat records (DropResult, SweepRow, SweepSummaryRow, TraceRow)
whose field order is the column order of the emitted CSV files.
"""

from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional

from sim.errors import ConfigError

MODES = ("sync-adc", "async-dac", "sync-dac")
POWER_MODES = ("sca", "full")
SWEEP_AXES = ("bits", "num_aps", "num_ues", "lag_tolerance", "lag_percent")
DESCALERS = ("csi", "statistical")
CHAINS = ("adc", "dac")
GAIN_CONVENTIONS = ("one-minus", "literal")
SENSITIVITY_MODES = ("sum", "per-ap")
INITIAL_POINTS = ("half", "full")


def _require(condition: bool, section: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{section}: {message}", section=section)


@dataclass
class SystemConfig:
    """Scalar system parameters of one cell-free deployment."""
    num_aps: int = 10
    num_ues: int = 3
    area_side_km: float = 1.0
    noise_power_w: float = 6.3608e-13  # 20 MHz, 9 dB noise figure, 290 K
    bandwidth_hz: float = 20.0e6
    pilot_len: int = 10
    block_len: int = 200
    grad_dim: int = 10
    max_power_w: float = 0.2
    update_size_bits: float = 100000.0
    rounds: int = 100
    learning_rate: Optional[float] = None  # None -> 1/M from the data

    def validate(self) -> "SystemConfig":
        _require(self.num_aps >= 1, "system", "num_aps must be >= 1")
        _require(self.num_ues >= 1, "system", "num_ues must be >= 1")
        _require(self.area_side_km > 0, "system", "area_side_km must be positive")
        _require(0 < self.pilot_len < self.block_len, "system", "need 0 < pilot_len < block_len")
        _require(self.noise_power_w > 0, "system", "noise_power_w must be positive")
        _require(self.bandwidth_hz > 0, "system", "bandwidth_hz must be positive")
        _require(self.max_power_w > 0, "system", "max_power_w must be positive")
        _require(self.grad_dim >= 1, "system", "grad_dim must be >= 1")
        _require(self.update_size_bits > 0, "system", "update_size_bits must be positive")
        _require(self.rounds >= 1, "system", "rounds must be >= 1")
        _require(self.learning_rate is None or self.learning_rate > 0,
                 "system", "learning_rate must be positive")
        return self

    @property
    def prelog(self) -> float:
        """Bits per second per unit spectral efficiency after pilot overhead."""
        return (1.0 - self.pilot_len / self.block_len) * self.bandwidth_hz


@dataclass(frozen=True)
class Position:
    """Node coordinates in kilometers."""
    x: float
    y: float


@dataclass
class ChannelParams:
    """Three-slope path loss with log-normal shadowing."""
    carrier_mhz: float = 1900.0
    ap_height_m: float = 15.0
    ue_height_m: float = 1.65
    near_km: float = 0.01
    far_km: float = 0.05
    shadowing: bool = True
    shadowing_std_db: float = 8.0

    def validate(self) -> "ChannelParams":
        _require(0 < self.near_km < self.far_km, "channel", "need 0 < near_km < far_km")
        _require(self.shadowing_std_db >= 0, "channel", "shadowing_std_db must be >= 0")
        _require(self.carrier_mhz > 0, "channel", "carrier_mhz must be positive")
        return self


@dataclass
class QuantizationSettings:
    adc_bits: int = 1
    dac_bits: int = 1
    dac_bits_per_ue: Optional[List[int]] = None
    tabulated: bool = False
    convention: str = "one-minus"

    def validate(self) -> "QuantizationSettings":
        _require(self.adc_bits >= 1, "quantization", "adc_bits must be >= 1")
        _require(self.dac_bits >= 1, "quantization", "dac_bits must be >= 1")
        if self.dac_bits_per_ue is not None:
            _require(all(b >= 1 for b in self.dac_bits_per_ue),
                     "quantization", "dac_bits_per_ue entries must be >= 1")
        _require(self.convention in GAIN_CONVENTIONS, "quantization",
                 f"convention must be one of {GAIN_CONVENTIONS}")
        return self


@dataclass
class ScheduleSettings:
    lag_tolerance: int = 4
    lag_percent: float = 85.0
    drop_stale: bool = False

    def validate(self) -> "ScheduleSettings":
        _require(self.lag_tolerance >= 1, "schedule", "lag_tolerance must be >= 1")
        _require(0 < self.lag_percent <= 100, "schedule", "lag_percent must be in (0, 100]")
        return self


@dataclass
class PrivacySettings:
    epsilon: float = 10.0
    delta: float = 0.01
    aggregation: str = "sum"
    statistics: bool = True
    ue_index: int = 0
    ap_index: int = 0
    monte_carlo_samples: int = 0
    bits_range: List[int] = field(default_factory=lambda: [1, 10])

    def validate(self) -> "PrivacySettings":
        _require(self.epsilon > 0, "privacy", "epsilon must be positive")
        _require(0 <= self.delta < 1, "privacy", "delta must be in [0, 1)")
        _require(self.aggregation in SENSITIVITY_MODES, "privacy",
                 f"aggregation must be one of {SENSITIVITY_MODES}")
        _require(len(self.bits_range) == 2 and 1 <= self.bits_range[0] <= self.bits_range[1],
                 "privacy", "bits_range must be [low, high] with 1 <= low <= high")
        _require(self.monte_carlo_samples >= 0, "privacy", "monte_carlo_samples must be >= 0")
        return self


@dataclass
class BarrierOptions:
    """Log-barrier interior-point settings."""
    initial_t: float = 1.0
    barrier_factor: float = 10.0
    newton_tolerance: float = 1e-8
    gap_tolerance: float = 1e-9
    max_newton_steps: int = 200
    max_outer_steps: int = 60


@dataclass
class SolverOptions:
    tolerance_s: float = 1e-6
    max_outer_iters: int = 50
    initial_point: str = "half"
    monotone_slack: float = 1e-8
    barrier: BarrierOptions = field(default_factory=BarrierOptions)

    def validate(self) -> "SolverOptions":
        _require(self.tolerance_s > 0, "solver", "tolerance_s must be positive")
        _require(self.max_outer_iters >= 1, "solver", "max_outer_iters must be >= 1")
        _require(self.initial_point in INITIAL_POINTS, "solver",
                 f"initial_point must be one of {INITIAL_POINTS}")
        _require(self.barrier.barrier_factor > 1, "solver", "barrier_factor must exceed 1")
        _require(self.barrier.initial_t > 0, "solver", "initial_t must be positive")
        return self


@dataclass
class TrainingSettings:
    samples_per_ue: int = 50
    min_eigenvalue: float = 1.0
    max_eigenvalue: float = 2.0
    noise: bool = True
    interference: bool = True
    descaler: str = "csi"
    chain: str = "adc"
    power_mode: str = "full"
    asynchronous: bool = False

    def validate(self) -> "TrainingSettings":
        _require(self.samples_per_ue >= 1, "training", "samples_per_ue must be >= 1")
        _require(0 < self.min_eigenvalue <= self.max_eigenvalue, "training",
                 "need 0 < min_eigenvalue <= max_eigenvalue")
        _require(self.descaler in DESCALERS, "training", f"descaler must be one of {DESCALERS}")
        _require(self.chain in CHAINS, "training", f"chain must be one of {CHAINS}")
        _require(self.power_mode in POWER_MODES, "training", f"power_mode must be one of {POWER_MODES}")
        return self


@dataclass
class SweepSettings:
    axis: str = "bits"
    values: List[float] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
    num_drops: int = 50
    mode: str = "sync-adc"
    power_mode: str = "sca"

    def validate(self) -> "SweepSettings":
        _require(self.axis in SWEEP_AXES, "sweep", f"axis must be one of {SWEEP_AXES}")
        _require(len(self.values) > 0, "sweep", "values must be nonempty")
        _require(self.num_drops >= 1, "sweep", "num_drops must be >= 1")
        _require(self.mode in MODES, "sweep", f"mode must be one of {MODES}")
        _require(self.power_mode in POWER_MODES, "sweep", f"power_mode must be one of {POWER_MODES}")
        return self


@dataclass
class ExperimentConfig:
    """One experiment file."""
    system: SystemConfig = field(default_factory=SystemConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    quantization: QuantizationSettings = field(default_factory=QuantizationSettings)
    schedule: ScheduleSettings = field(default_factory=ScheduleSettings)
    privacy: PrivacySettings = field(default_factory=PrivacySettings)
    solver: SolverOptions = field(default_factory=SolverOptions)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    seed: int = 2024
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        for section in (self.system, self.channel, self.quantization, self.schedule,
                        self.privacy, self.solver, self.training, self.sweep):
            section.validate()
        _require(self.seed >= 0, "experiment", "seed must be a nonnegative integer")
        _require(self.workers >= 1, "experiment", "workers must be >= 1")
        per_ue = self.quantization.dac_bits_per_ue
        _require(per_ue is None or len(per_ue) == self.system.num_ues, "quantization",
                 "dac_bits_per_ue must list one entry per UE")
        _require(self.privacy.ue_index < self.system.num_ues, "privacy", "ue_index out of range")
        _require(self.privacy.ap_index < self.system.num_aps, "privacy", "ap_index out of range")
        return self


# Results layer


@dataclass
class DropResult:
    """Outcome of one channel drop through the simulation pipeline."""
    drop: int
    seed: int
    config_hash: str
    mode: str
    power_mode: str
    status: str
    total_time_s: float = float("nan")
    full_power_time_s: float = float("nan")
    reduction_pct: float = float("nan")
    sca_iterations: int = 0
    mean_served: float = float("nan")
    worst_lambda: float = float("nan")
    dp_bound: float = float("nan")
    dp_passed: bool = False
    fronthaul_bits: float = float("nan")
    powers_w: List[float] = field(default_factory=list)
    rates_bps: List[float] = field(default_factory=list)
    objective_trace: List[float] = field(default_factory=list)
    error: Optional[Dict[str, Any]] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepRow:
    """One (axis value, drop) sweep point with its provenance."""
    axis: str
    value: float
    drop: int
    seed: int
    config_hash: str
    status: str
    total_time_s: float
    full_power_time_s: float
    reduction_pct: float
    mean_served: float
    worst_lambda: float
    dp_bound: float
    dp_passed: bool
    fronthaul_bits: float
    error: str


@dataclass
class SweepSummaryRow:
    """Mean over drops at one axis value."""
    axis: str
    value: float
    num_drops: int
    num_ok: int
    num_failed: int
    mean_time_s: float
    std_time_s: float
    mean_full_power_time_s: float
    mean_reduction_pct: float
    mean_lambda: float
    dp_pass_rate: float
    seed: int
    config_hash: str


@dataclass
class TraceRow:
    """One training round."""
    round: int
    loss: float
    gap: float
    bound: float
    lam: float
    served_count: int
    energy_j: float


def column_names(record_type: type) -> List[str]:
    """CSV header for a results record, in field order."""
    names = [f.name for f in fields(record_type)]
    return ["lambda" if name == "lam" else name for name in names]
