"""Discrete-event simulation of concurrent federated jobs on a shared fleet.

Each job runs synchronous rounds (the slowest selected device sets the round
duration, per the shifted-exponential execution-time model) while different
jobs proceed asynchronously relative to each other. The engine owns the event
queue, the occupied-device set, and the participation ledger, and derives all
randomness from one root seed through stable per-(purpose, job, round, device)
sub-streams so scheduler choice never perturbs workload noise.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .baselines import (
    GeneticParams,
    genetic_select,
    greedy_select,
    random_select,
    sequential_plan,
)
from .config import SCHEDULER_NAMES, ExperimentConfig, FleetConfig
from .core import (
    ConfigurationError,
    DeviceProfile,
    FleetRanges,
    JobSpec,
    ParticipationLedger,
    ResourceVector,
    SchedulingPlan,
    SchedulingStarvedError,
    SpeedRanges,
    apply_background_load,
    generate_fleet,
)
from .scoring import ScoreWeights, fedact_select, update_ledger
from .workload import DivergenceError, generate_dataset, make_workload, partition


class SimulationError(RuntimeError):
    """The simulation reached an invalid or unrecoverable state."""


class EventKind(IntEnum):
    ROUND_COMPLETE = 0
    JOB_DONE = 1
    SCHEDULE_RETRY = 2


@dataclass(frozen=True)
class SimEvent:
    """A timed event; ties are processed in (time, job_id, kind) order."""

    time: float
    job_id: int
    kind: EventKind

    def sort_key(self, sequence: int) -> tuple[float, int, int, int]:
        return (self.time, self.job_id, self.kind.value, sequence)


# Purpose tags for sub-stream derivation. Values are part of the reproducibility
# contract: changing them changes every seeded run.
_TAG_EXECUTION = 0
_TAG_TRAINING = 1
_TAG_SELECTION = 2
_TAG_GENETIC = 3
_TAG_FLEET = 4
_TAG_LOAD = 5
_TAG_DATASET = 6
_TAG_PARTITION = 7


class Substreams:
    """Deterministic RNG streams derived from one root seed.

    Streams are keyed by purpose and by (job, round, device), so the draw a
    device's execution or training consumes depends only on that key. Two
    schedulers picking the same device for the same round of the same job see
    identical noise, which makes scheduler comparisons paired.
    """

    def __init__(self, root_seed: int):
        if root_seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {root_seed}")
        self.root = int(root_seed)

    def _generator(self, *path: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.root, *path]))

    def execution(self, job_id: int, round_index: int, device_id: int):
        return self._generator(_TAG_EXECUTION, job_id, round_index, device_id)

    def training(self, job_id: int, round_index: int, device_id: int):
        return self._generator(_TAG_TRAINING, job_id, round_index, device_id)

    def selection(self, job_id: int, round_index: int):
        return self._generator(_TAG_SELECTION, job_id, round_index)

    def derived_seed(self, *path: int) -> int:
        seq = np.random.SeedSequence([self.root, *path])
        return int(seq.generate_state(1, np.uint64)[0])


def sample_execution_time(
    device: DeviceProfile, job: JobSpec, rng: np.random.Generator
) -> float:
    """Draw one round's execution time for a device under the given job.

    Shifted exponential: a deterministic floor of epochs * alpha * samples plus
    an exponential tail with mean epochs * samples / mu, so every draw is at
    least the floor and the mean is epochs * samples * (alpha + 1 / mu).
    """
    samples = device.data_sizes.get(job.id, 0)
    if samples <= 0:
        raise SimulationError(
            f"device {device.id} holds no data for job {job.id} but was scheduled"
        )
    floor = job.local_epochs * device.alpha * samples
    scale = job.local_epochs * samples / device.mu
    return floor + float(rng.exponential(scale))


@dataclass(frozen=True)
class RoundRecord:
    job_id: int
    round_index: int
    selected: tuple[int, ...]
    round_duration: float
    loss: float
    accuracy: float
    cumulative_time: float


@dataclass
class SimResult:
    scheduler: str
    seed: int
    job_ids: list[int]
    jct: dict[int, float | None]
    histories: dict[int, list[RoundRecord]]
    average_jct: float | None
    time_to_target: dict[int, float | None]
    status: dict[int, str]
    events_processed: int
    participation_counts: list[list[int]]

    def to_dict(self) -> dict:
        """Stable JSON-ready form (used for byte-level determinism checks)."""
        return {
            "scheduler": self.scheduler,
            "seed": self.seed,
            "average_jct": self.average_jct,
            "events_processed": self.events_processed,
            "participation_counts": self.participation_counts,
            "jobs": [
                {
                    "job_id": job_id,
                    "jct": self.jct[job_id],
                    "time_to_target": self.time_to_target[job_id],
                    "status": self.status[job_id],
                    "rounds": [
                        {
                            "round": record.round_index,
                            "selected": list(record.selected),
                            "round_duration": record.round_duration,
                            "loss": record.loss,
                            "accuracy": record.accuracy,
                            "cumulative_time": record.cumulative_time,
                        }
                        for record in self.histories[job_id]
                    ],
                }
                for job_id in self.job_ids
            ],
        }


def run_round(
    job: JobSpec,
    plan: SchedulingPlan,
    devices_by_id: dict[int, DeviceProfile],
    streams: Substreams,
    workload,
    start_time: float,
) -> RoundRecord:
    """Execute one synchronous round: sample per-device times, run the
    workload's local updates and aggregation, and return the filled record.

    The round lasts as long as its slowest member; aggregation itself adds no
    simulated time.
    """
    durations = [
        sample_execution_time(
            devices_by_id[device_id],
            job,
            streams.execution(job.id, plan.round_index, device_id),
        )
        for device_id in plan.selected
    ]
    duration = max(durations)
    loss, accuracy = workload.execute_round(plan.selected, streams, plan.round_index)
    if not np.isfinite(loss):
        raise DivergenceError(
            f"job {job.id} round {plan.round_index}: non-finite loss {loss}"
        )
    return RoundRecord(
        job_id=job.id,
        round_index=plan.round_index,
        selected=plan.selected,
        round_duration=duration,
        loss=loss,
        accuracy=accuracy,
        cumulative_time=start_time + duration,
    )


def compute_metrics(
    histories: dict[int, list[RoundRecord]], targets: dict[int, float | None]
) -> tuple[dict[int, float | None], float | None, dict[int, float | None]]:
    """Per-job completion times, their mean, and first target-accuracy crossings.

    A job's completion time is its last round's cumulative time; the average
    is defined only when every job has a history. ``time_to_target`` is None
    (reported as NA) when the target is absent or never reached.
    """
    if not histories:
        raise ConfigurationError("compute_metrics needs at least one job history")
    jct: dict[int, float | None] = {}
    time_to_target: dict[int, float | None] = {}
    for job_id, records in histories.items():
        jct[job_id] = records[-1].cumulative_time if records else None
        target = targets.get(job_id)
        crossing = None
        if target is not None:
            for record in records:
                if record.accuracy >= target:
                    crossing = record.cumulative_time
                    break
        time_to_target[job_id] = crossing
    values = list(jct.values())
    average = float(np.mean(values)) if all(v is not None for v in values) else None
    return jct, average, time_to_target


def _to_fleet_ranges(cfg) -> FleetRanges:
    return FleetRanges(
        compute=tuple(cfg.compute), memory=tuple(cfg.memory), bandwidth=tuple(cfg.bandwidth)
    )


def _to_speed_ranges(cfg) -> SpeedRanges:
    return SpeedRanges(alpha=tuple(cfg.alpha), mu=tuple(cfg.mu))


def build_fleet(fleet_cfg: FleetConfig, streams: Substreams) -> list[DeviceProfile]:
    """Instantiate the device fleet (one block per cluster when configured)."""
    if fleet_cfg.clusters is not None:
        fleet: list[DeviceProfile] = []
        for index, cluster in enumerate(fleet_cfg.clusters):
            fleet.extend(
                generate_fleet(
                    cluster.count,
                    _to_fleet_ranges(cluster.resource_ranges),
                    _to_speed_ranges(cluster.speed_ranges),
                    seed=streams.derived_seed(_TAG_FLEET, index),
                    id_offset=len(fleet),
                )
            )
    else:
        fleet = generate_fleet(
            fleet_cfg.count,
            _to_fleet_ranges(fleet_cfg.resource_ranges),
            _to_speed_ranges(fleet_cfg.speed_ranges),
            seed=streams.derived_seed(_TAG_FLEET, 0),
        )
    apply_background_load(
        fleet, fleet_cfg.background_load_max, streams.derived_seed(_TAG_LOAD)
    )
    return fleet


def build_jobs(config: ExperimentConfig, fleet: list[DeviceProfile]) -> list[JobSpec]:
    jobs = []
    for index, job_cfg in enumerate(config.jobs):
        job = JobSpec(
            id=index,
            demand=ResourceVector(
                compute=job_cfg.demand.compute,
                memory=job_cfg.demand.memory,
                bandwidth=job_cfg.demand.bandwidth,
            ),
            fraction=job_cfg.fraction,
            max_rounds=job_cfg.max_rounds,
            target_loss=job_cfg.target_loss,
            local_epochs=job_cfg.local_epochs,
            batch_size=job_cfg.batch_size,
            target_accuracy=job_cfg.target_accuracy,
        )
        if not any(device.capacity.covers(job.demand) for device in fleet):
            raise ConfigurationError(
                f"jobs[{index}].demand exceeds every device capacity; job is unschedulable"
            )
        jobs.append(job)
    return jobs


def build_workloads(
    config: ExperimentConfig,
    jobs: list[JobSpec],
    fleet: list[DeviceProfile],
    streams: Substreams,
) -> list:
    """Generate each job's dataset, partition it, and wire up data sizes."""
    wl = config.workload
    drivers = []
    for job in jobs:
        dataset = generate_dataset(
            wl.samples,
            wl.features,
            wl.classes,
            cluster_spread=wl.cluster_spread,
            seed=streams.derived_seed(_TAG_DATASET, job.id),
            holdout_fraction=wl.holdout_fraction,
        )
        shards = partition(
            dataset, len(fleet), wl.partition, streams.derived_seed(_TAG_PARTITION, job.id)
        )
        dataset.partitions[job.id] = shards
        for device, shard in zip(fleet, shards):
            if len(shard) == 0:
                raise ConfigurationError(
                    f"device {device.id} received no samples for job {job.id}; "
                    "increase workload.samples or shrink the fleet"
                )
            device.data_sizes[job.id] = len(shard)
        drivers.append(
            make_workload(
                job,
                dataset,
                shards,
                wl.mode,
                wl.learning_rate,
                wl.surrogate.decay,
                wl.surrogate.floor,
            )
        )
    return drivers


def _make_selector(
    scheduler: str,
    config: ExperimentConfig,
    fleet: list[DeviceProfile],
    ledger: ParticipationLedger,
    streams: Substreams,
):
    """Bind the chosen scheduling policy to a (job, occupied, round) callable."""
    sched_cfg = config.scheduler
    if scheduler == "fedact":
        weights = ScoreWeights(alpha=sched_cfg.alpha, beta=sched_cfg.beta)

        def select(job, occupied, round_index):
            return fedact_select(job, fleet, occupied, ledger, weights, round_index)

    elif scheduler in ("random", "sequential"):

        def select(job, occupied, round_index):
            return random_select(
                job,
                fleet,
                occupied,
                streams.selection(job.id, round_index),
                round_index=round_index,
            )

    elif scheduler == "greedy":

        def select(job, occupied, round_index):
            return greedy_select(
                job, fleet, occupied, ledger, sched_cfg.greedy_penalty, round_index
            )

    elif scheduler == "genetic":
        base = GeneticParams(
            population_size=sched_cfg.genetic.population_size,
            generations=sched_cfg.genetic.generations,
            mutation_rate=sched_cfg.genetic.mutation_rate,
            crossover_rate=sched_cfg.genetic.crossover_rate,
            seed=sched_cfg.genetic.seed,
        )

        def select(job, occupied, round_index):
            params = replace(
                base,
                seed=streams.derived_seed(_TAG_GENETIC, job.id, round_index, base.seed),
            )
            return genetic_select(job, fleet, occupied, params, round_index=round_index)

    else:
        raise ConfigurationError(
            f"unknown scheduler {scheduler!r}; choose one of {SCHEDULER_NAMES}"
        )
    return select


def run_simulation(config: ExperimentConfig, scheduler: str, seed: int) -> SimResult:
    """Run one full replication and return its metrics and round history.

    Jobs request plans at t = 0 in job-id order (sequential mode starts them
    one at a time); a job that cannot fill its plan waits for the next device
    release and retries. Identical (config, scheduler, seed) inputs give an
    identical result.
    """
    if scheduler not in SCHEDULER_NAMES:
        raise ConfigurationError(
            f"unknown scheduler {scheduler!r}; choose one of {SCHEDULER_NAMES}"
        )
    streams = Substreams(seed)
    fleet = build_fleet(config.fleet, streams)
    jobs = build_jobs(config, fleet)
    drivers = build_workloads(config, jobs, fleet, streams)
    devices_by_id = {device.id: device for device in fleet}
    ledger = ParticipationLedger.empty(len(fleet), len(jobs))
    select = _make_selector(scheduler, config, fleet, ledger, streams)

    heap: list[tuple[tuple[float, int, int, int], SimEvent]] = []
    sequence = itertools.count()

    def push(time: float, job_id: int, kind: EventKind) -> None:
        event = SimEvent(time=time, job_id=job_id, kind=kind)
        heapq.heappush(heap, (event.sort_key(next(sequence)), event))

    occupied: dict[int, int] = {}
    waiting: set[int] = set()
    in_flight: dict[int, RoundRecord] = {}
    histories: dict[int, list[RoundRecord]] = {job.id: [] for job in jobs}
    status: dict[int, str] = {job.id: "running" for job in jobs}
    jct: dict[int, float | None] = {job.id: None for job in jobs}
    active = {job.id for job in jobs}
    events_processed = 0

    sequential = scheduler == "sequential"
    order = sequential_plan(jobs)
    next_to_start = 0

    def start_next_sequential(now: float) -> None:
        nonlocal next_to_start
        while next_to_start < len(order):
            candidate = order[next_to_start]
            next_to_start += 1
            if candidate.id in active:
                push(now, candidate.id, EventKind.SCHEDULE_RETRY)
                return

    def release(selected: tuple[int, ...], now: float) -> None:
        for device_id in selected:
            del occupied[device_id]
        for job_id in sorted(waiting):
            push(now, job_id, EventKind.SCHEDULE_RETRY)
        waiting.clear()

    def finish_job(job_id: int, now: float, outcome: str) -> None:
        status[job_id] = outcome
        active.discard(job_id)
        waiting.discard(job_id)
        if sequential:
            start_next_sequential(now)

    def try_schedule(job: JobSpec, now: float) -> None:
        round_index = int(ledger.rounds_started[job.id])
        try:
            plan = select(job, set(occupied), round_index)
        except SchedulingStarvedError:
            waiting.add(job.id)
            return
        for device_id in plan.selected:
            if device_id in occupied:
                raise SimulationError(
                    f"device {device_id} selected for job {job.id} while still "
                    f"occupied by job {occupied[device_id]} at t={now:.6f}"
                )
        update_ledger(ledger, plan)
        for device_id in plan.selected:
            occupied[device_id] = job.id
        try:
            record = run_round(job, plan, devices_by_id, streams, drivers[job.id], now)
        except DivergenceError as error:
            release(plan.selected, now)
            finish_job(job.id, now, f"failed: {error}")
            return
        in_flight[job.id] = record
        push(record.cumulative_time, job.id, EventKind.ROUND_COMPLETE)

    if sequential:
        start_next_sequential(0.0)
    else:
        for job in jobs:
            push(0.0, job.id, EventKind.SCHEDULE_RETRY)

    jobs_by_id = {job.id: job for job in jobs}
    while heap:
        _, event = heapq.heappop(heap)
        time, job_id, kind = event.time, event.job_id, event.kind
        events_processed += 1
        if job_id not in active:
            continue
        if kind == EventKind.SCHEDULE_RETRY:
            try_schedule(jobs_by_id[job_id], time)
        elif kind == EventKind.ROUND_COMPLETE:
            record = in_flight.pop(job_id)
            histories[job_id].append(record)
            job = jobs_by_id[job_id]
            done = (
                record.loss <= job.target_loss
                or record.round_index + 1 >= job.max_rounds
            )
            if done:
                push(time, job_id, EventKind.JOB_DONE)
            else:
                push(time, job_id, EventKind.SCHEDULE_RETRY)
            release(record.selected, time)
        elif kind == EventKind.JOB_DONE:
            jct[job_id] = time
            finish_job(job_id, time, "ok")

    if active:
        stuck = sorted(active)
        raise SimulationError(
            "deadlock: jobs "
            + ", ".join(str(j) for j in stuck)
            + f" are starved with no pending device releases; occupied={dict(sorted(occupied.items()))}, "
            + f"waiting={sorted(waiting)}, rounds_started={ledger.rounds_started.tolist()}"
        )

    targets = {job.id: job.target_accuracy for job in jobs}
    metric_jct, average, time_to_target = compute_metrics(histories, targets)
    for job in jobs:
        if status[job.id] == "ok" and jct[job.id] is None:
            jct[job.id] = metric_jct[job.id]
    ok = all(status[job.id] == "ok" for job in jobs)
    return SimResult(
        scheduler=scheduler,
        seed=seed,
        job_ids=[job.id for job in jobs],
        jct=jct,
        histories=histories,
        average_jct=average if ok else None,
        time_to_target=time_to_target,
        status=status,
        events_processed=events_processed,
        participation_counts=ledger.counts.tolist(),
    )
