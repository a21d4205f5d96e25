"""Scheduler x seed sweeps and result emission (CSV files plus a text report)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .config import SCHEDULER_NAMES, ExperimentConfig
from .core import ConfigurationError
from .engine import SimResult, SimulationError, run_simulation
from .workload import DivergenceError

ROUNDS_HEADER = (
    "scheduler",
    "seed",
    "job_id",
    "round",
    "selected_count",
    "round_duration_s",
    "cumulative_time_s",
    "loss",
    "accuracy",
)
SUMMARY_HEADER = (
    "scheduler",
    "seed",
    "job_id",
    "jct_s",
    "time_to_target_s_or_NA",
    "final_accuracy",
    "status",
)


@dataclass(frozen=True)
class RoundRow:
    scheduler: str
    seed: int
    job_id: int
    round: int
    selected_count: int
    round_duration_s: float
    cumulative_time_s: float
    loss: float
    accuracy: float


@dataclass(frozen=True)
class JobOutcome:
    job_id: int
    jct_s: float | None
    time_to_target_s: float | None
    final_accuracy: float | None
    status: str


@dataclass(frozen=True)
class ReplicationSummary:
    """One (scheduler, seed) replication with its per-job completion times."""

    scheduler: str
    seed: int
    jobs: tuple[JobOutcome, ...]
    average_jct_s: float | None
    status: str


@dataclass(frozen=True)
class SchedulerReport:
    scheduler: str
    replications: int
    mean_average_jct_s: float | None
    stddev_average_jct_s: float | None


@dataclass
class ExperimentResults:
    rounds: list[RoundRow]
    summaries: list[ReplicationSummary]
    report: list[SchedulerReport]

    def all_ok(self) -> bool:
        return all(summary.status == "ok" for summary in self.summaries)


def resolve_schedulers(
    config: ExperimentConfig, schedulers: list[str] | None = None
) -> list[str]:
    """Expand the requested scheduler list ('all' means every policy)."""
    requested = list(schedulers) if schedulers else [config.scheduler.name]
    if "all" in requested:
        return list(SCHEDULER_NAMES)
    resolved = sorted(set(requested))
    for name in resolved:
        if name not in SCHEDULER_NAMES:
            raise ConfigurationError(
                f"unknown scheduler {name!r}; choose from {SCHEDULER_NAMES} or 'all'"
            )
    return resolved


def _summarize(result: SimResult) -> ReplicationSummary:
    outcomes = []
    for job_id in result.job_ids:
        history = result.histories[job_id]
        outcomes.append(
            JobOutcome(
                job_id=job_id,
                jct_s=result.jct[job_id],
                time_to_target_s=result.time_to_target[job_id],
                final_accuracy=history[-1].accuracy if history else None,
                status=result.status[job_id],
            )
        )
    ok = all(outcome.status == "ok" for outcome in outcomes)
    return ReplicationSummary(
        scheduler=result.scheduler,
        seed=result.seed,
        jobs=tuple(outcomes),
        average_jct_s=result.average_jct,
        status="ok" if ok else "error: " + "; ".join(
            f"job {o.job_id} {o.status}" for o in outcomes if o.status != "ok"
        ),
    )


def _failed_summary(
    scheduler: str, seed: int, config: ExperimentConfig, message: str
) -> ReplicationSummary:
    outcomes = tuple(
        JobOutcome(
            job_id=index,
            jct_s=None,
            time_to_target_s=None,
            final_accuracy=None,
            status=f"error: {message}",
        )
        for index in range(len(config.jobs))
    )
    return ReplicationSummary(
        scheduler=scheduler,
        seed=seed,
        jobs=outcomes,
        average_jct_s=None,
        status=f"error: {message}",
    )


def _build_report(summaries: list[ReplicationSummary]) -> list[SchedulerReport]:
    by_scheduler: dict[str, list[float]] = {}
    counts: dict[str, int] = {}
    for summary in summaries:
        counts[summary.scheduler] = counts.get(summary.scheduler, 0) + 1
        if summary.status == "ok" and summary.average_jct_s is not None:
            by_scheduler.setdefault(summary.scheduler, []).append(summary.average_jct_s)
    report = []
    for scheduler in sorted(counts):
        values = by_scheduler.get(scheduler, [])
        if values:
            mean = sum(values) / len(values)
            if len(values) > 1:
                variance = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
                stddev = math.sqrt(variance)
            else:
                stddev = 0.0
        else:
            mean = stddev = None
        report.append(
            SchedulerReport(
                scheduler=scheduler,
                replications=counts[scheduler],
                mean_average_jct_s=mean,
                stddev_average_jct_s=stddev,
            )
        )
    return report


def run_experiment(
    config: ExperimentConfig,
    schedulers: list[str] | None = None,
    seeds: list[int] | None = None,
    workload_mode: str | None = None,
) -> ExperimentResults:
    """Run every (scheduler, seed) pair and collect per-round and summary rows.

    All schedulers share per-(job, round, device) randomness through the
    engine's sub-stream scheme, so comparisons at the same seed are paired. A
    replication that fails is recorded with a non-ok status; the sweep
    continues.
    """
    if workload_mode is not None:
        config = config.model_copy(deep=True)
        config.workload.mode = workload_mode
    scheduler_list = resolve_schedulers(config, schedulers)
    seed_list = sorted(set(seeds if seeds is not None else config.run.seeds))
    if not seed_list:
        raise ConfigurationError("at least one seed is required")

    rounds: list[RoundRow] = []
    summaries: list[ReplicationSummary] = []
    for scheduler in scheduler_list:
        for seed in seed_list:
            try:
                result = run_simulation(config, scheduler, seed)
            except (SimulationError, DivergenceError) as error:
                summaries.append(_failed_summary(scheduler, seed, config, str(error)))
                continue
            summaries.append(_summarize(result))
            for job_id in result.job_ids:
                for record in result.histories[job_id]:
                    rounds.append(
                        RoundRow(
                            scheduler=scheduler,
                            seed=seed,
                            job_id=job_id,
                            round=record.round_index,
                            selected_count=len(record.selected),
                            round_duration_s=record.round_duration,
                            cumulative_time_s=record.cumulative_time,
                            loss=record.loss,
                            accuracy=record.accuracy,
                        )
                    )

    rounds.sort(key=lambda r: (r.scheduler, r.seed, r.job_id, r.round))
    summaries.sort(key=lambda s: (s.scheduler, s.seed))
    return ExperimentResults(
        rounds=rounds, summaries=summaries, report=_build_report(summaries)
    )


def format_float(value: float | None) -> str:
    """Fixed serialization: 6 significant digits, NA for missing values."""
    if value is None:
        return "NA"
    return format(value, "#.6g")


def render_report(report: list[SchedulerReport]) -> str:
    lines = ["average JCT per scheduler (seconds, mean +/- stddev over seeds)"]
    for entry in report:
        lines.append(
            f"{entry.scheduler}: mean={format_float(entry.mean_average_jct_s)} "
            f"stddev={format_float(entry.stddev_average_jct_s)} "
            f"replications={entry.replications}"
        )
    return "\n".join(lines) + "\n"


def write_results(results: ExperimentResults, out_dir: str | Path) -> list[Path]:
    """Write rounds.csv, summary.csv, and report.txt into ``out_dir``.

    Row order is fixed (scheduler, seed, job, round) and floats carry six
    significant digits, so identical results serialize byte-identically.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rounds_path = out_dir / "rounds.csv"
    summary_path = out_dir / "summary.csv"
    report_path = out_dir / "report.txt"

    with rounds_path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ROUNDS_HEADER)
        for row in results.rounds:
            writer.writerow(
                [
                    row.scheduler,
                    row.seed,
                    row.job_id,
                    row.round,
                    row.selected_count,
                    format_float(row.round_duration_s),
                    format_float(row.cumulative_time_s),
                    format_float(row.loss),
                    format_float(row.accuracy),
                ]
            )

    with summary_path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for summary in results.summaries:
            for outcome in summary.jobs:
                writer.writerow(
                    [
                        summary.scheduler,
                        summary.seed,
                        outcome.job_id,
                        format_float(outcome.jct_s),
                        format_float(outcome.time_to_target_s),
                        format_float(outcome.final_accuracy),
                        outcome.status,
                    ]
                )

    report_path.write_text(render_report(results.report))
    return [rounds_path, summary_path, report_path]


def results_from_payload(payload: dict) -> ExperimentResults:
    """Rebuild results from the service's JSON payload (the CLI's half of the
    wire format)."""
    rounds = [RoundRow(**row) for row in payload["rounds"]]
    summaries = [
        ReplicationSummary(
            scheduler=item["scheduler"],
            seed=item["seed"],
            jobs=tuple(JobOutcome(**job) for job in item["jobs"]),
            average_jct_s=item["average_jct_s"],
            status=item["status"],
        )
        for item in payload["summaries"]
    ]
    report = [SchedulerReport(**entry) for entry in payload["report"]]
    return ExperimentResults(rounds=rounds, summaries=summaries, report=report)
