import numpy as np
import pytest

from fedsched.core import DeviceProfile, JobSpec, ParticipationLedger, ResourceVector

# Filled by the acceptance-test decorator; printed after the run.
ACCEPTANCE_VERDICTS: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, verdict in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(f"ACCEPTANCE {number} {name}: {verdict}")


def make_device(
    device_id: int,
    capacity=(10.0, 10.0, 10.0),
    available=None,
    alpha: float = 1e-4,
    mu: float = 2.0,
    data_sizes=None,
) -> DeviceProfile:
    cap = ResourceVector(*capacity)
    avail = ResourceVector(*(available if available is not None else capacity))
    return DeviceProfile(
        id=device_id,
        capacity=cap,
        available=avail,
        alpha=alpha,
        mu=mu,
        data_sizes=dict(data_sizes or {}),
    )


def make_job(
    job_id: int = 0,
    demand=(1.0, 1.0, 1.0),
    fraction: float = 0.5,
    max_rounds: int = 10,
    target_loss: float = 0.0,
    local_epochs: int = 1,
    batch_size: int = 8,
    target_accuracy=None,
) -> JobSpec:
    return JobSpec(
        id=job_id,
        demand=ResourceVector(*demand),
        fraction=fraction,
        max_rounds=max_rounds,
        target_loss=target_loss,
        local_epochs=local_epochs,
        batch_size=batch_size,
        target_accuracy=target_accuracy,
    )


def uniform_score_fleet(terms, job_demand=(1.0, 1.0, 1.0)):
    """Devices whose resource-alignment term for a unit demand equals ``terms``.

    With available == capacity and equal per-resource weights, a device with
    all capacities 1/t scores exactly t against demand (1, 1, 1).
    """
    return [make_device(i, capacity=(1.0 / t,) * 3) for i, t in enumerate(terms)]


@pytest.fixture
def empty_ledger():
    def build(fleet_size: int, job_count: int = 1) -> ParticipationLedger:
        return ParticipationLedger.empty(fleet_size, job_count)

    return build


def minimal_config_dict(**overrides) -> dict:
    data = {
        "fleet": {"count": 10, "background_load_max": 0.0},
        "jobs": [
            {
                "demand": {"compute": 0.5, "memory": 128.0, "bandwidth": 2.0},
                "max_rounds": 3,
                "fraction": 0.2,
            }
        ],
        "workload": {"samples": 200, "features": 4, "classes": 4, "learning_rate": 0.1},
        "run": {"seeds": [1]},
    }
    data.update(overrides)
    return data


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
