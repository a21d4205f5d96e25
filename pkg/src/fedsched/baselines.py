"""Comparison schedulers: random, greedy, genetic, and sequential single-job."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    DeviceProfile,
    JobSpec,
    ParticipationLedger,
    SchedulingPlan,
    SchedulingStarvedError,
    devices_per_round,
    eligible,
)
from .scoring import resource_alignment

TOURNAMENT_SIZE = 3


@dataclass(frozen=True)
class GeneticParams:
    population_size: int = 20
    generations: int = 30
    mutation_rate: float = 0.1
    crossover_rate: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ConfigurationError("genetic population_size must be >= 1")
        if self.crossover_rate > 0 and self.population_size < 2:
            raise ConfigurationError(
                "genetic population_size must be >= 2 when crossover is enabled"
            )
        if self.generations < 0:
            raise ConfigurationError("genetic generations must be >= 0")
        for name in ("mutation_rate", "crossover_rate"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ConfigurationError(f"genetic {name} must be in [0, 1]")


def _candidate_pool(
    job: JobSpec, fleet: list[DeviceProfile], occupied: set[int]
) -> list[DeviceProfile]:
    return [d for d in fleet if d.id not in occupied and eligible(d, job)]


def random_select(
    job: JobSpec,
    fleet: list[DeviceProfile],
    occupied: set[int],
    rng: np.random.Generator,
    round_index: int = 0,
) -> SchedulingPlan:
    """Uniform sample (without replacement) of eligible, unoccupied devices."""
    size = devices_per_round(job.fraction, len(fleet))
    pool = _candidate_pool(job, fleet, occupied)
    if len(pool) < size:
        raise SchedulingStarvedError(job.id, size, len(pool))
    ids = np.array(sorted(d.id for d in pool))
    chosen = rng.choice(ids, size=size, replace=False)
    return SchedulingPlan(
        job_id=job.id, round_index=round_index, selected=tuple(sorted(int(i) for i in chosen))
    )


def greedy_select(
    job: JobSpec,
    fleet: list[DeviceProfile],
    occupied: set[int],
    ledger: ParticipationLedger,
    penalty: float,
    round_index: int,
) -> SchedulingPlan:
    """Iteratively take the device with the best penalty-adjusted alignment.

    Adjusted score = resource_alignment - penalty * normalized participation
    count. Scores do not depend on the remaining pool, so the iterative pick
    reduces to a single sort; ties break by lower device id.
    """
    if penalty < 0:
        raise ConfigurationError(f"greedy penalty must be >= 0, got {penalty}")
    size = devices_per_round(job.fraction, ledger.fleet_size)
    pool = _candidate_pool(job, fleet, occupied)
    if len(pool) < size:
        raise SchedulingStarvedError(job.id, size, len(pool))
    denom = max(1, round_index)
    adjusted = [
        (
            resource_alignment(d, job)
            - penalty * float(ledger.counts[d.id, job.id]) / denom,
            d.id,
        )
        for d in pool
    ]
    adjusted.sort(key=lambda pair: (-pair[0], pair[1]))
    chosen = tuple(sorted(device_id for _, device_id in adjusted[:size]))
    return SchedulingPlan(job_id=job.id, round_index=round_index, selected=chosen)


def _repair(
    members: set[int], size: int, all_ids: list[int], rng: np.random.Generator
) -> frozenset[int]:
    """Trim or pad a candidate subset back to exactly ``size`` members."""
    members = set(members)
    if len(members) > size:
        drop = rng.choice(sorted(members), size=len(members) - size, replace=False)
        members.difference_update(int(i) for i in drop)
    elif len(members) < size:
        outside = sorted(set(all_ids) - members)
        add = rng.choice(outside, size=size - len(members), replace=False)
        members.update(int(i) for i in add)
    return frozenset(members)


def evolve_subsets(
    scores: dict[int, float],
    size: int,
    params: GeneticParams,
    rng: np.random.Generator,
) -> tuple[frozenset[int], list[float]]:
    """Genetic search over fixed-size device subsets.

    Fitness is the summed resource-alignment score of the subset. The initial
    population holds the greedy (top-``size`` by score) subset plus random
    subsets; elitism keeps the best individual alive, so best fitness never
    decreases. Returns the best subset and the per-generation best-fitness
    trace (initial population first).
    """
    all_ids = sorted(scores)

    def fitness(subset: frozenset[int]) -> float:
        return sum(scores[i] for i in subset)

    greedy = frozenset(
        device_id
        for device_id, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:size]
    )
    population = [greedy]
    while len(population) < params.population_size:
        pick = rng.choice(all_ids, size=size, replace=False)
        population.append(frozenset(int(i) for i in pick))

    def best_of(pop: list[frozenset[int]]) -> frozenset[int]:
        best = pop[0]
        best_fit = fitness(best)
        for individual in pop[1:]:
            fit = fitness(individual)
            if fit > best_fit:
                best, best_fit = individual, fit
        return best

    def tournament(pop: list[frozenset[int]]) -> frozenset[int]:
        picks = rng.integers(0, len(pop), size=min(TOURNAMENT_SIZE, len(pop)))
        return best_of([pop[int(i)] for i in picks])

    best = best_of(population)
    history = [fitness(best)]
    for _ in range(params.generations):
        next_population = [best]
        while len(next_population) < params.population_size:
            parent_a = tournament(population)
            if rng.random() < params.crossover_rate:
                parent_b = tournament(population)
                keep = parent_a & parent_b
                child = _repair(set(keep), size, sorted(parent_a | parent_b), rng)
            else:
                child = parent_a
            if rng.random() < params.mutation_rate and len(all_ids) > size:
                members = sorted(child)
                outside = sorted(set(all_ids) - child)
                out_id = int(rng.choice(members))
                in_id = int(rng.choice(outside))
                child = frozenset((child - {out_id}) | {in_id})
            next_population.append(child)
        population = next_population
        candidate = best_of(population)
        if fitness(candidate) > fitness(best):
            best = candidate
        history.append(fitness(best))
    return best, history


def genetic_select(
    job: JobSpec,
    fleet: list[DeviceProfile],
    occupied: set[int],
    params: GeneticParams,
    round_index: int = 0,
) -> SchedulingPlan:
    """Evolutionary subset search maximizing total resource alignment."""
    size = devices_per_round(job.fraction, len(fleet))
    pool = _candidate_pool(job, fleet, occupied)
    if len(pool) < size:
        raise SchedulingStarvedError(job.id, size, len(pool))
    if len(pool) == size:
        chosen = tuple(sorted(d.id for d in pool))
        return SchedulingPlan(job_id=job.id, round_index=round_index, selected=chosen)
    scores = {d.id: resource_alignment(d, job) for d in pool}
    rng = np.random.default_rng(params.seed)
    best, _ = evolve_subsets(scores, size, params, rng)
    return SchedulingPlan(
        job_id=job.id, round_index=round_index, selected=tuple(sorted(best))
    )


def sequential_plan(jobs: list[JobSpec]) -> list[JobSpec]:
    """Single-job execution order: jobs run one at a time, in submission order."""
    if not jobs:
        raise ConfigurationError("sequential execution needs at least one job")
    return list(jobs)
