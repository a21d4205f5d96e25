"""HTTP facade over the simulator: run experiments and single simulations."""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import SCHEDULER_NAMES, ExperimentConfig, SchedulerName, WorkloadMode
from .core import ConfigurationError
from .engine import run_simulation
from .experiment import run_experiment


class ApiModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RoundRowModel(ApiModel):
    scheduler: str
    seed: int
    job_id: int
    round: int
    selected_count: int
    round_duration_s: float
    cumulative_time_s: float
    loss: float
    accuracy: float


class JobOutcomeModel(ApiModel):
    job_id: int
    jct_s: float | None
    time_to_target_s: float | None
    final_accuracy: float | None
    status: str


class ReplicationSummaryModel(ApiModel):
    scheduler: str
    seed: int
    jobs: list[JobOutcomeModel]
    average_jct_s: float | None
    status: str


class SchedulerReportModel(ApiModel):
    scheduler: str
    replications: int
    mean_average_jct_s: float | None
    stddev_average_jct_s: float | None


class ExperimentRequest(ApiModel):
    config: ExperimentConfig
    schedulers: list[str] | None = Field(
        default=None, description="Overrides config.scheduler.name; 'all' expands."
    )
    seeds: list[int] | None = Field(default=None, description="Overrides config.run.seeds.")
    workload_mode: WorkloadMode | None = None


class ExperimentResponse(ApiModel):
    rounds: list[RoundRowModel]
    summaries: list[ReplicationSummaryModel]
    report: list[SchedulerReportModel]
    all_ok: bool


class SimulationRequest(ApiModel):
    config: ExperimentConfig
    scheduler: SchedulerName = "fedact"
    seed: int = Field(default=0, ge=0)


class RoundRecordModel(ApiModel):
    round: int
    selected: list[int]
    round_duration: float
    loss: float
    accuracy: float
    cumulative_time: float


class JobResultModel(ApiModel):
    job_id: int
    jct: float | None
    time_to_target: float | None
    status: str
    rounds: list[RoundRecordModel]


class SimulationResponse(ApiModel):
    scheduler: str
    seed: int
    average_jct: float | None
    events_processed: int
    jobs: list[JobResultModel]


def create_app() -> FastAPI:
    app = FastAPI(
        title="fedsched",
        version=__version__,
        description=(
            "Discrete-event simulator for scheduling concurrent federated-learning "
            "jobs over a shared heterogeneous device fleet."
        ),
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/schedulers")
    def schedulers() -> dict:
        return {"schedulers": list(SCHEDULER_NAMES)}

    @app.post("/experiments", response_model=ExperimentResponse)
    def experiments(request: ExperimentRequest) -> ExperimentResponse:
        try:
            results = run_experiment(
                request.config,
                schedulers=request.schedulers,
                seeds=request.seeds,
                workload_mode=request.workload_mode,
            )
        except ConfigurationError as error:
            raise HTTPException(status_code=422, detail=str(error)) from error
        return ExperimentResponse(
            rounds=[RoundRowModel(**asdict(row)) for row in results.rounds],
            summaries=[
                ReplicationSummaryModel(
                    scheduler=summary.scheduler,
                    seed=summary.seed,
                    jobs=[JobOutcomeModel(**asdict(job)) for job in summary.jobs],
                    average_jct_s=summary.average_jct_s,
                    status=summary.status,
                )
                for summary in results.summaries
            ],
            report=[SchedulerReportModel(**asdict(entry)) for entry in results.report],
            all_ok=results.all_ok(),
        )

    @app.post("/simulations", response_model=SimulationResponse)
    def simulations(request: SimulationRequest) -> SimulationResponse:
        try:
            result = run_simulation(request.config, request.scheduler, request.seed)
        except ConfigurationError as error:
            raise HTTPException(status_code=422, detail=str(error)) from error
        payload = result.to_dict()
        return SimulationResponse(
            scheduler=payload["scheduler"],
            seed=payload["seed"],
            average_jct=payload["average_jct"],
            events_processed=payload["events_processed"],
            jobs=[
                JobResultModel(
                    job_id=job["job_id"],
                    jct=job["jct"],
                    time_to_target=job["time_to_target"],
                    status=job["status"],
                    rounds=[RoundRecordModel(**record) for record in job["rounds"]],
                )
                for job in payload["jobs"]
            ],
        )

    return app


app = create_app()
