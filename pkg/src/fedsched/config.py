"""Experiment configuration: strict schema, YAML ingestion, default echoing.

The same models back the config file and the HTTP request bodies. Unknown keys
are rejected everywhere, and every default applied during parsing is echoed to
the ``fedsched.config`` logger.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import ConfigurationError

logger = logging.getLogger(__name__)

SCHEDULER_NAMES = ("fedact", "genetic", "greedy", "random", "sequential")

SchedulerName = Literal["fedact", "genetic", "greedy", "random", "sequential"]
WorkloadMode = Literal["real", "surrogate"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _check_bounds(name: str, value: tuple[float, float]) -> tuple[float, float]:
    lo, hi = value
    if lo <= 0:
        raise ValueError(f"{name} minimum must be > 0, got {lo}")
    if lo > hi:
        raise ValueError(f"{name} minimum {lo} exceeds maximum {hi}")
    return value


class ResourceDemand(StrictModel):
    compute: float = Field(ge=0)
    memory: float = Field(ge=0)
    bandwidth: float = Field(ge=0)


class ResourceRangesConfig(StrictModel):
    compute: tuple[float, float] = (1.0, 10.0)
    memory: tuple[float, float] = (512.0, 8192.0)
    bandwidth: tuple[float, float] = (5.0, 100.0)

    @field_validator("compute", "memory", "bandwidth")
    @classmethod
    def _valid_bounds(cls, value, info):
        return _check_bounds(info.field_name, value)


class SpeedRangesConfig(StrictModel):
    alpha: tuple[float, float] = (0.5e-4, 5e-4)
    mu: tuple[float, float] = (0.5, 5.0)

    @field_validator("alpha", "mu")
    @classmethod
    def _valid_bounds(cls, value, info):
        return _check_bounds(info.field_name, value)


class ClusterConfig(StrictModel):
    count: int = Field(ge=1)
    resource_ranges: ResourceRangesConfig = Field(default_factory=ResourceRangesConfig)
    speed_ranges: SpeedRangesConfig = Field(default_factory=SpeedRangesConfig)


class FleetConfig(StrictModel):
    count: int | None = Field(default=None, ge=1)
    resource_ranges: ResourceRangesConfig = Field(default_factory=ResourceRangesConfig)
    speed_ranges: SpeedRangesConfig = Field(default_factory=SpeedRangesConfig)
    background_load_max: float = Field(default=0.3, ge=0, lt=1)
    clusters: list[ClusterConfig] | None = None

    @model_validator(mode="after")
    def _count_or_clusters(self):
        if self.clusters is not None and len(self.clusters) == 0:
            raise ValueError("clusters must not be empty when given")
        if self.count is None and self.clusters is None:
            raise ValueError("either count or clusters is required")
        return self

    @property
    def total_count(self) -> int:
        if self.clusters is not None:
            return sum(cluster.count for cluster in self.clusters)
        return int(self.count)


class JobConfig(StrictModel):
    demand: ResourceDemand
    fraction: float = Field(default=0.1, gt=0, le=1)
    max_rounds: int = Field(default=50, ge=1)
    target_loss: float = Field(default=0.0, ge=0)
    local_epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=32, ge=1)
    target_accuracy: float | None = Field(default=None, ge=0, le=1)


class GeneticConfig(StrictModel):
    population_size: int = Field(default=20, ge=2)
    generations: int = Field(default=30, ge=0)
    mutation_rate: float = Field(default=0.1, ge=0, le=1)
    crossover_rate: float = Field(default=0.8, ge=0, le=1)
    seed: int = Field(default=0, ge=0)


class SchedulerConfig(StrictModel):
    name: Literal["fedact", "genetic", "greedy", "random", "sequential", "all"] = "fedact"
    alpha: float = Field(default=0.7, ge=0)
    beta: float = Field(default=0.3, ge=0)
    greedy_penalty: float = Field(default=0.3, ge=0)
    genetic: GeneticConfig = Field(default_factory=GeneticConfig)

    @model_validator(mode="after")
    def _weights_usable(self):
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha and beta must not both be zero")
        return self


class SurrogateConfig(StrictModel):
    decay: float = Field(default=0.5, gt=0, lt=1)
    floor: float = Field(default=0.0, ge=0)


class WorkloadConfig(StrictModel):
    mode: WorkloadMode = "real"
    samples: int = Field(default=5000, ge=2)
    features: int = Field(default=16, ge=1)
    classes: int = Field(default=10, ge=2)
    learning_rate: float = Field(default=0.05, gt=0)
    partition: Literal["iid", "noniid"] = "iid"
    cluster_spread: float = Field(default=1.0, gt=0)
    holdout_fraction: float = Field(default=0.2, ge=0, lt=1)
    surrogate: SurrogateConfig = Field(default_factory=SurrogateConfig)


class RunConfig(StrictModel):
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: str = "results"

    @field_validator("seeds")
    @classmethod
    def _non_negative(cls, seeds):
        for seed in seeds:
            if seed < 0:
                raise ValueError(f"seeds must be >= 0, got {seed}")
        return seeds


class ExperimentConfig(StrictModel):
    fleet: FleetConfig
    jobs: list[JobConfig] = Field(min_length=1)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    workload: WorkloadConfig = Field(default_factory=WorkloadConfig)
    run: RunConfig = Field(default_factory=RunConfig)


def _format_location(loc: tuple) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(f".{item}" if parts else str(item))
    return "".join(parts) or "<root>"


def format_validation_error(error: ValidationError) -> str:
    lines = [
        f"{_format_location(item['loc'])}: {item['msg']}" for item in error.errors()
    ]
    return "; ".join(lines)


def iter_applied_defaults(model: BaseModel, prefix: str = ""):
    """Yield (path, value) for every field the user did not set explicitly."""
    for name in type(model).model_fields:
        path = f"{prefix}.{name}" if prefix else name
        value = getattr(model, name)
        if name not in model.model_fields_set:
            yield path, value
        elif isinstance(value, BaseModel):
            yield from iter_applied_defaults(value, path)
        elif isinstance(value, list):
            for index, item in enumerate(value):
                if isinstance(item, BaseModel):
                    yield from iter_applied_defaults(item, f"{path}[{index}]")


def _render_default(value) -> str:
    if isinstance(value, BaseModel):
        return repr(value.model_dump())
    return repr(value)


def validate_config(data: dict) -> ExperimentConfig:
    """Validate raw mapping data into a config, echoing applied defaults."""
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as error:
        raise ConfigurationError(format_validation_error(error)) from error
    for path, value in iter_applied_defaults(config):
        logger.info("config default applied: %s = %s", path, _render_default(value))
    return config


def parse_config(path: str | Path) -> ExperimentConfig:
    """Load and validate a YAML experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as error:
        raise ConfigurationError(f"config parse error in {path}: {error}") from error
    if not isinstance(data, dict):
        raise ConfigurationError(f"config root must be a mapping: {path}")
    return validate_config(data)
