"""Domain types shared by the scheduler, baselines, and simulation engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RESOURCE_FIELDS = ("compute", "memory", "bandwidth")


class ConfigurationError(ValueError):
    """A configuration value is out of range or internally inconsistent."""


class SchedulingStarvedError(RuntimeError):
    """A selector could not fill a plan from the eligible, unoccupied pool.

    The engine catches this and parks the job until devices are released.
    """

    def __init__(self, job_id: int, needed: int, available: int):
        self.job_id = job_id
        self.needed = needed
        self.available = available
        self.shortfall = needed - available
        super().__init__(
            f"job {job_id}: plan needs {needed} devices but only {available} are "
            f"eligible and unoccupied (short {self.shortfall})"
        )


@dataclass(frozen=True)
class ResourceVector:
    """A (compute units, memory MB, bandwidth Mbps) triple.

    Used both for device capacity/availability and for a job's minimum
    per-device demand. Components must be finite and non-negative.
    """

    compute: float
    memory: float
    bandwidth: float

    def __post_init__(self):
        for name in RESOURCE_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(
                    f"resource component {name!r} must be finite and >= 0, got {value}"
                )

    def covers(self, other: "ResourceVector") -> bool:
        """Componentwise self >= other."""
        return all(
            getattr(self, name) >= getattr(other, name) for name in RESOURCE_FIELDS
        )

    def strictly_positive(self) -> bool:
        return all(getattr(self, name) > 0 for name in RESOURCE_FIELDS)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.compute, self.memory, self.bandwidth)


@dataclass
class DeviceProfile:
    """One device: total capacity, currently available resources, and speed.

    ``alpha`` is the deterministic seconds per (epoch * sample); ``mu`` is the
    fluctuation rate of the stochastic part of the execution-time model.
    ``data_sizes`` maps job id to the device's local sample count for that job
    and is filled in when workloads are partitioned.
    """

    id: int
    capacity: ResourceVector
    available: ResourceVector
    alpha: float
    mu: float
    data_sizes: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.capacity.strictly_positive():
            raise ConfigurationError(
                f"device {self.id}: capacity components must all be > 0"
            )
        if not self.capacity.covers(self.available):
            raise ConfigurationError(
                f"device {self.id}: available resources exceed capacity"
            )
        if self.alpha <= 0 or not math.isfinite(self.alpha):
            raise ConfigurationError(f"device {self.id}: alpha must be > 0")
        if self.mu <= 0 or not math.isfinite(self.mu):
            raise ConfigurationError(f"device {self.id}: mu must be > 0")


@dataclass(frozen=True)
class JobSpec:
    """One federated job's demands and training knobs.

    ``fraction`` is the share of the whole fleet selected each round;
    ``target_accuracy`` is optional and only used for time-to-target reporting.
    """

    id: int
    demand: ResourceVector
    fraction: float
    max_rounds: int
    target_loss: float
    local_epochs: int
    batch_size: int
    target_accuracy: float | None = None

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ConfigurationError(
                f"job {self.id}: fraction must be in (0, 1], got {self.fraction}"
            )
        if self.max_rounds < 1:
            raise ConfigurationError(f"job {self.id}: max_rounds must be >= 1")
        if self.target_loss < 0:
            raise ConfigurationError(f"job {self.id}: target_loss must be >= 0")
        if self.local_epochs < 1:
            raise ConfigurationError(f"job {self.id}: local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError(f"job {self.id}: batch_size must be >= 1")


def devices_per_round(fraction: float, fleet_size: int) -> int:
    """Plan size: round(fraction * fleet_size), never below 1."""
    return max(1, int(fraction * fleet_size + 0.5))


@dataclass(frozen=True)
class SchedulingPlan:
    """The devices assigned to one job for one round."""

    job_id: int
    round_index: int
    selected: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected):
            raise ConfigurationError(
                f"plan for job {self.job_id} round {self.round_index} repeats a device"
            )


@dataclass
class ParticipationLedger:
    """Per-(device, job) selection counts plus rounds issued per job."""

    counts: np.ndarray
    rounds_started: np.ndarray

    @classmethod
    def empty(cls, fleet_size: int, job_count: int) -> "ParticipationLedger":
        return cls(
            counts=np.zeros((fleet_size, job_count), dtype=np.int64),
            rounds_started=np.zeros(job_count, dtype=np.int64),
        )

    @property
    def fleet_size(self) -> int:
        return self.counts.shape[0]

    @property
    def job_count(self) -> int:
        return self.counts.shape[1]


@dataclass(frozen=True)
class FleetRanges:
    """Uniform sampling bounds for device capacities, as (low, high) pairs."""

    compute: tuple[float, float] = (1.0, 10.0)
    memory: tuple[float, float] = (512.0, 8192.0)
    bandwidth: tuple[float, float] = (5.0, 100.0)


@dataclass(frozen=True)
class SpeedRanges:
    """Uniform sampling bounds for the execution-time parameters."""

    alpha: tuple[float, float] = (0.5e-4, 5e-4)
    mu: tuple[float, float] = (0.5, 5.0)


def _check_range(name: str, bounds: tuple[float, float]) -> None:
    lo, hi = bounds
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigurationError(f"{name}: bounds must be finite, got {bounds}")
    if lo <= 0:
        raise ConfigurationError(f"{name}: minimum must be > 0, got {lo}")
    if lo > hi:
        raise ConfigurationError(f"{name}: minimum {lo} exceeds maximum {hi}")


def generate_fleet(
    count: int,
    ranges: FleetRanges = FleetRanges(),
    speed_ranges: SpeedRanges = SpeedRanges(),
    seed: int = 0,
    id_offset: int = 0,
) -> list[DeviceProfile]:
    """Sample a reproducible heterogeneous fleet of ``count`` devices.

    Capacities and speed parameters are drawn uniformly within the given
    ranges; devices start with ``available == capacity``. Identical arguments
    produce a field-identical fleet.
    """
    if count < 1:
        raise ConfigurationError(f"fleet count must be >= 1, got {count}")
    for name in RESOURCE_FIELDS:
        _check_range(f"ranges.{name}", getattr(ranges, name))
    _check_range("speed_ranges.alpha", speed_ranges.alpha)
    _check_range("speed_ranges.mu", speed_ranges.mu)

    rng = np.random.default_rng(seed)
    fleet = []
    for k in range(count):
        capacity = ResourceVector(
            *(float(rng.uniform(*getattr(ranges, name))) for name in RESOURCE_FIELDS)
        )
        alpha = float(rng.uniform(*speed_ranges.alpha))
        mu = float(rng.uniform(*speed_ranges.mu))
        fleet.append(
            DeviceProfile(
                id=id_offset + k,
                capacity=capacity,
                available=capacity,
                alpha=alpha,
                mu=mu,
            )
        )
    return fleet


def apply_background_load(
    fleet: list[DeviceProfile], max_fraction: float, seed: int
) -> list[DeviceProfile]:
    """Subtract a static background load from every device's availability.

    Each component loses a uniform 0..max_fraction share of its capacity,
    sampled once per device. ``max_fraction == 0`` leaves the fleet untouched.
    """
    if not 0 <= max_fraction < 1:
        raise ConfigurationError(
            f"background load fraction must be in [0, 1), got {max_fraction}"
        )
    if max_fraction == 0:
        return fleet
    rng = np.random.default_rng(seed)
    for device in fleet:
        loads = rng.uniform(0.0, max_fraction, size=len(RESOURCE_FIELDS))
        device.available = ResourceVector(
            *(
                getattr(device.capacity, name) * (1.0 - float(load))
                for name, load in zip(RESOURCE_FIELDS, loads)
            )
        )
    return fleet


def eligible(device: DeviceProfile, job: JobSpec) -> bool:
    """True iff the device's available resources cover the job's demand."""
    return device.available.covers(job.demand)
