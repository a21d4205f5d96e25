"""fedsched: multi-job federated-learning scheduling on simulated device fleets."""

__version__ = "0.1.0"

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
    eligible,
    generate_fleet,
)
from .scoring import ScoreWeights, alignment_score, fairness_score, fedact_select, resource_alignment
from .engine import SimResult, run_simulation, sample_execution_time
from .experiment import run_experiment, write_results

__all__ = [
    "ConfigurationError",
    "DeviceProfile",
    "FleetRanges",
    "JobSpec",
    "ParticipationLedger",
    "ResourceVector",
    "SchedulingPlan",
    "SchedulingStarvedError",
    "ScoreWeights",
    "SimResult",
    "SpeedRanges",
    "alignment_score",
    "eligible",
    "fairness_score",
    "fedact_select",
    "generate_fleet",
    "resource_alignment",
    "run_experiment",
    "run_simulation",
    "sample_execution_time",
    "write_results",
]
