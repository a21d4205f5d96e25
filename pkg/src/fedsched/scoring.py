"""Alignment scoring and top-C device selection for concurrent FL jobs.

A device-job pair is scored by a weighted blend of two [0, 1] terms:
resource alignment (how tightly the job utilizes the device) and
participation fairness (how far the device's selection frequency sits from
the fleet mean). Selection takes the highest-scoring eligible, unoccupied
devices, with deterministic tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    RESOURCE_FIELDS,
    ConfigurationError,
    DeviceProfile,
    JobSpec,
    ParticipationLedger,
    SchedulingPlan,
    SchedulingStarvedError,
    devices_per_round,
    eligible,
)

EQUAL_RESOURCE_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class ScoreWeights:
    """Blend weights: ``alpha`` for resource alignment, ``beta`` for fairness."""

    alpha: float = 0.7
    beta: float = 0.3

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("score weights must be >= 0")
        if self.alpha + self.beta <= 0:
            raise ConfigurationError("score weights must not both be zero")


@dataclass(frozen=True)
class ScoreBreakdown:
    device_id: int
    job_id: int
    resource_term: float
    fairness_term: float
    combined: float


def resource_alignment(
    device: DeviceProfile,
    job: JobSpec,
    weights: tuple[float, float, float] = EQUAL_RESOURCE_WEIGHTS,
) -> float:
    """Capacity-normalized dot product of job demand and device availability.

    Each resource contributes w_j * (demand_j / capacity_j) *
    (available_j / capacity_j), so the score is highest for devices whose
    capacity the job would utilize most tightly. Requires an eligible device;
    callers filter with :func:`fedsched.core.eligible` first.
    """
    if not eligible(device, job):
        raise ValueError(
            f"device {device.id} is not eligible for job {job.id}; "
            "filter candidates with eligible() before scoring"
        )
    total = 0.0
    for weight, name in zip(weights, RESOURCE_FIELDS):
        cap = getattr(device.capacity, name)
        if cap <= 0:
            raise ConfigurationError(
                f"device {device.id}: capacity component {name!r} must be > 0"
            )
        total += (
            weight
            * (getattr(job.demand, name) / cap)
            * (getattr(device.available, name) / cap)
        )
    return min(max(total, 0.0), 1.0)


def fairness_score(
    ledger: ParticipationLedger,
    device_id: int,
    job_id: int,
    fleet_size: int,
    round_index: int,
) -> float:
    """Participation balance: 1 minus the squared deviation of the device's
    normalized selection frequency from the fleet mean, clamped to [0, 1].

    Frequencies are counts divided by max(1, round_index), so before any round
    has been scheduled every device scores 1.
    """
    denom = max(1, round_index)
    column = ledger.counts[:, job_id]
    freq = column[device_id] / denom
    mean = float(column.sum()) / (denom * fleet_size)
    deviation = freq - mean
    return min(max(1.0 - deviation * deviation, 0.0), 1.0)


def alignment_score(resource_term: float, fairness_term: float, weights: ScoreWeights) -> float:
    """Weighted mean of the two terms, normalized by alpha + beta to stay in [0, 1]."""
    return (weights.alpha * resource_term + weights.beta * fairness_term) / (
        weights.alpha + weights.beta
    )


def score_candidates(
    job: JobSpec,
    fleet: list[DeviceProfile],
    occupied: set[int],
    ledger: ParticipationLedger,
    weights: ScoreWeights,
    round_index: int,
) -> list[ScoreBreakdown]:
    """Score every eligible, unoccupied device for the job."""
    breakdowns = []
    for device in fleet:
        if device.id in occupied or not eligible(device, job):
            continue
        resource_term = resource_alignment(device, job)
        fairness_term = fairness_score(
            ledger, device.id, job.id, ledger.fleet_size, round_index
        )
        breakdowns.append(
            ScoreBreakdown(
                device_id=device.id,
                job_id=job.id,
                resource_term=resource_term,
                fairness_term=fairness_term,
                combined=alignment_score(resource_term, fairness_term, weights),
            )
        )
    return breakdowns


def fedact_select(
    job: JobSpec,
    fleet: list[DeviceProfile],
    occupied: set[int],
    ledger: ParticipationLedger,
    weights: ScoreWeights,
    round_index: int,
) -> SchedulingPlan:
    """Pick the top-scoring eligible, unoccupied devices for one round.

    Ties break toward the device selected fewest times so far, then toward the
    lower id, keeping selection deterministic and least-selected-first when
    scores are equal.
    """
    size = devices_per_round(job.fraction, ledger.fleet_size)
    scored = score_candidates(job, fleet, occupied, ledger, weights, round_index)
    if len(scored) < size:
        raise SchedulingStarvedError(job.id, size, len(scored))
    scored.sort(
        key=lambda s: (-s.combined, int(ledger.counts[s.device_id, job.id]), s.device_id)
    )
    chosen = tuple(sorted(s.device_id for s in scored[:size]))
    return SchedulingPlan(job_id=job.id, round_index=round_index, selected=chosen)


def update_ledger(ledger: ParticipationLedger, plan: SchedulingPlan) -> ParticipationLedger:
    """Record one issued plan: bump each selected device's count and the job's
    round counter. Mutates and returns the ledger."""
    for device_id in plan.selected:
        ledger.counts[device_id, plan.job_id] += 1
    ledger.rounds_started[plan.job_id] += 1
    return ledger
