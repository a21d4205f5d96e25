import json

import numpy as np
import pytest

from fedsched.config import validate_config
from fedsched.core import ConfigurationError, SchedulingPlan
from fedsched.engine import (
    RoundRecord,
    SimulationError,
    Substreams,
    compute_metrics,
    run_round,
    run_simulation,
    sample_execution_time,
)

from conftest import make_device, make_job


def quiet_config(data):
    import logging

    logging.getLogger("fedsched.config").setLevel(logging.WARNING)
    return validate_config(data)


class TestEventOrdering:
    def test_ties_break_by_job_then_kind(self):
        from fedsched.engine import EventKind, SimEvent

        retry_job0 = SimEvent(5.0, 0, EventKind.SCHEDULE_RETRY).sort_key(9)
        complete_job1 = SimEvent(5.0, 1, EventKind.ROUND_COMPLETE).sort_key(1)
        complete_job0 = SimEvent(5.0, 0, EventKind.ROUND_COMPLETE).sort_key(4)
        done_job0 = SimEvent(5.0, 0, EventKind.JOB_DONE).sort_key(2)
        earlier = SimEvent(4.0, 7, EventKind.SCHEDULE_RETRY).sort_key(99)
        ordered = sorted([retry_job0, complete_job1, complete_job0, done_job0, earlier])
        assert ordered == [earlier, complete_job0, done_job0, retry_job0, complete_job1]


class TestSubstreams:
    def test_same_key_same_draws(self):
        streams = Substreams(42)
        a = streams.execution(1, 2, 3).random(4)
        b = streams.execution(1, 2, 3).random(4)
        assert np.array_equal(a, b)

    def test_distinct_keys_distinct_draws(self):
        streams = Substreams(42)
        a = streams.execution(1, 2, 3).random()
        b = streams.execution(1, 2, 4).random()
        c = streams.training(1, 2, 3).random()
        assert a != b and a != c

    def test_negative_seed_rejected(self):
        with pytest.raises(ConfigurationError):
            Substreams(-1)


class TestSampleExecutionTime:
    def make_pair(self, alpha=1e-4, mu=2.0, data=600, epochs=5):
        device = make_device(0, alpha=alpha, mu=mu, data_sizes={0: data})
        job = make_job(job_id=0, local_epochs=epochs)
        return device, job

    def test_never_below_deterministic_floor(self):
        device, job = self.make_pair()
        rng = np.random.default_rng(1)
        floor = 5 * 1e-4 * 600
        for _ in range(2000):
            assert sample_execution_time(device, job, rng) >= floor

    def test_empirical_mean_matches_analytic(self):
        # floor 0.3 s plus exponential mean tau*D/mu = 1500 s -> 1500.3 s total
        device, job = self.make_pair()
        rng = np.random.default_rng(2)
        samples = [sample_execution_time(device, job, rng) for _ in range(20_000)]
        assert abs(np.mean(samples) - 1500.3) / 1500.3 <= 0.02

    def test_doubling_mu_halves_exponential_mean(self):
        rng_a = np.random.default_rng(3)
        rng_b = np.random.default_rng(3)
        device_a, job = self.make_pair(mu=1.0)
        device_b, _ = self.make_pair(mu=2.0)
        floor = 5 * 1e-4 * 600
        mean_a = np.mean(
            [sample_execution_time(device_a, job, rng_a) - floor for _ in range(20_000)]
        )
        mean_b = np.mean(
            [sample_execution_time(device_b, job, rng_b) - floor for _ in range(20_000)]
        )
        assert abs(mean_a / mean_b - 2.0) <= 0.1

    def test_zero_data_is_an_error(self):
        device = make_device(0, data_sizes={})
        with pytest.raises(SimulationError, match="no data"):
            sample_execution_time(device, make_job(), np.random.default_rng(0))


class _StubWorkload:
    def __init__(self, loss=0.5, accuracy=0.5):
        self.loss = loss
        self.accuracy = accuracy

    def execute_round(self, selected, streams, round_index):
        return self.loss, self.accuracy


class TestRunRound:
    def test_singleton_plan_duration_equals_member_time(self):
        streams = Substreams(5)
        device = make_device(3, alpha=2e-3, mu=4.0, data_sizes={0: 100})
        job = make_job(job_id=0, local_epochs=2)
        plan = SchedulingPlan(0, 0, (3,))
        record = run_round(job, plan, {3: device}, streams, _StubWorkload(), 10.0)
        expected = sample_execution_time(device, job, streams.execution(0, 0, 3))
        assert record.round_duration == expected
        assert record.cumulative_time == 10.0 + expected

    def test_duration_is_max_of_member_times(self):
        # alpha values pick 3 s and 7 s floors; huge mu suppresses the tail
        streams = Substreams(6)
        devices = {
            0: make_device(0, alpha=0.03, mu=1e9, data_sizes={0: 100}),
            1: make_device(1, alpha=0.07, mu=1e9, data_sizes={0: 100}),
        }
        job = make_job(job_id=0, local_epochs=1)
        record = run_round(job, SchedulingPlan(0, 0, (0, 1)), devices, streams, _StubWorkload(), 0.0)
        assert record.round_duration == pytest.approx(7.0, rel=1e-4)

    def test_scheduling_a_dataless_device_fails(self):
        streams = Substreams(7)
        devices = {0: make_device(0, data_sizes={})}
        with pytest.raises(SimulationError, match="no data"):
            run_round(make_job(), SchedulingPlan(0, 0, (0,)), devices, streams, _StubWorkload(), 0.0)


class TestComputeMetrics:
    def record(self, job_id, round_index, accuracy, cumulative):
        return RoundRecord(job_id, round_index, (0,), 1.0, 0.5, accuracy, cumulative)

    def test_average_is_arithmetic_mean(self):
        histories = {
            0: [self.record(0, 0, 0.5, 10.0)],
            1: [self.record(1, 0, 0.5, 20.0)],
            2: [self.record(2, 0, 0.5, 30.0)],
        }
        jct, average, _ = compute_metrics(histories, {0: None, 1: None, 2: None})
        assert jct == {0: 10.0, 1: 20.0, 2: 30.0}
        assert average == pytest.approx(20.0)

    def test_time_to_target_first_crossing(self):
        histories = {
            0: [
                self.record(0, 0, 0.4, 5.0),
                self.record(0, 1, 0.6, 9.0),
                self.record(0, 2, 0.8, 14.0),
            ]
        }
        _, _, ttt = compute_metrics(histories, {0: 0.6})
        assert ttt[0] == 9.0

    def test_unreached_target_is_none(self):
        histories = {0: [self.record(0, 0, 0.4, 5.0)]}
        _, _, ttt = compute_metrics(histories, {0: 0.99})
        assert ttt[0] is None


def small_sim_config(**workload_overrides):
    workload = {
        "samples": 200,
        "features": 4,
        "classes": 4,
        "learning_rate": 0.1,
        "mode": "surrogate",
    }
    workload.update(workload_overrides)
    return quiet_config(
        {
            "fleet": {"count": 8, "background_load_max": 0.0},
            "jobs": [
                {
                    "demand": {"compute": 0.5, "memory": 128.0, "bandwidth": 2.0},
                    "max_rounds": 4,
                    "fraction": 0.25,
                }
            ],
            "workload": workload,
            "run": {"seeds": [1]},
        }
    )


def assert_no_device_overlap(result):
    intervals = {}
    for job_id in result.job_ids:
        for record in result.histories[job_id]:
            start = record.cumulative_time - record.round_duration
            for device_id in record.selected:
                intervals.setdefault(device_id, []).append((start, record.cumulative_time, job_id))
    for device_id, spans in intervals.items():
        spans.sort()
        for (s1, e1, j1), (s2, e2, j2) in zip(spans, spans[1:]):
            assert s2 >= e1 - 1e-9, (
                f"device {device_id} overlaps: job {j1} [{s1}, {e1}] vs job {j2} [{s2}, {e2}]"
            )


class TestRunSimulation:
    def test_single_round_jct_equals_round_duration(self):
        config = small_sim_config()
        config.jobs[0].max_rounds = 1
        result = run_simulation(config, "fedact", 3)
        record = result.histories[0][0]
        assert result.jct[0] == record.cumulative_time == record.round_duration

    def test_deterministic_repeat_byte_identical(self):
        config = small_sim_config(mode="real")
        first = run_simulation(config, "greedy", 11)
        second = run_simulation(config, "greedy", 11)
        assert json.dumps(first.to_dict()) == json.dumps(second.to_dict())

    def test_cumulative_time_strictly_increasing_per_job(self):
        config = small_sim_config()
        config.jobs[0].max_rounds = 10
        result = run_simulation(config, "random", 5)
        times = [r.cumulative_time for r in result.histories[0]]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_participation_conservation(self):
        config = small_sim_config()
        config.jobs[0].max_rounds = 12
        result = run_simulation(config, "fedact", 9)
        counts = np.array(result.participation_counts)
        for job_id in result.job_ids:
            issued = sum(len(r.selected) for r in result.histories[job_id])
            assert counts[:, job_id].sum() == issued

    def test_disjoint_demands_isolate_jobs(self):
        # Two clusters where each job is eligible on exactly one: the first
        # job's history must match its solo run record-for-record.
        fleet = {
            "background_load_max": 0.0,
            "clusters": [
                {
                    "count": 4,
                    "resource_ranges": {
                        "compute": [8.0, 8.0],
                        "memory": [1024.0, 1024.0],
                        "bandwidth": [10.0, 10.0],
                    },
                },
                {
                    "count": 4,
                    "resource_ranges": {
                        "compute": [2.0, 2.0],
                        "memory": [1024.0, 1024.0],
                        "bandwidth": [50.0, 50.0],
                    },
                },
            ],
        }
        job0 = {
            "demand": {"compute": 5.0, "memory": 256.0, "bandwidth": 5.0},
            "max_rounds": 4,
            "fraction": 0.25,
        }
        job1 = {
            "demand": {"compute": 1.0, "memory": 256.0, "bandwidth": 30.0},
            "max_rounds": 4,
            "fraction": 0.25,
        }
        workload = {"samples": 240, "features": 4, "classes": 4, "learning_rate": 0.1}
        pair_cfg = quiet_config(
            {"fleet": fleet, "jobs": [job0, job1], "workload": workload, "run": {"seeds": [1]}}
        )
        solo_cfg = quiet_config(
            {"fleet": fleet, "jobs": [job0], "workload": workload, "run": {"seeds": [1]}}
        )
        for scheduler in ("fedact", "random"):
            pair = run_simulation(pair_cfg, scheduler, 21)
            solo = run_simulation(solo_cfg, scheduler, 21)
            assert pair.to_dict()["jobs"][0] == solo.to_dict()["jobs"][0]
            assert_no_device_overlap(pair)

    def test_sequential_jcts_compose(self):
        # One device, two identical single-round jobs, negligible noise: each
        # round lasts epochs * alpha * samples = 600 s, so JCTs are 600, 1200.
        config = quiet_config(
            {
                "fleet": {
                    "count": 1,
                    "background_load_max": 0.0,
                    "resource_ranges": {
                        "compute": [4.0, 4.0],
                        "memory": [1024.0, 1024.0],
                        "bandwidth": [10.0, 10.0],
                    },
                    "speed_ranges": {"alpha": [1.5, 1.5], "mu": [1e9, 1e9]},
                },
                "jobs": [
                    {
                        "demand": {"compute": 1.0, "memory": 128.0, "bandwidth": 1.0},
                        "max_rounds": 1,
                        "fraction": 1.0,
                        "local_epochs": 5,
                    }
                ]
                * 2,
                "workload": {
                    "samples": 100,
                    "features": 4,
                    "classes": 4,
                    "learning_rate": 0.1,
                    "holdout_fraction": 0.2,
                },
                "run": {"seeds": [1]},
            }
        )
        result = run_simulation(config, "sequential", 13)
        assert result.jct[0] == pytest.approx(600.0, rel=1e-4)
        assert result.jct[1] == pytest.approx(1200.0, rel=1e-4)
        assert result.average_jct == pytest.approx(900.0, rel=1e-4)

    def test_sequential_single_job_matches_random(self):
        # With one job there is nothing to sequence: the schedule must equal
        # the random scheduler's, since both draw from the same selection stream.
        config = small_sim_config(mode="real")
        sequential = run_simulation(config, "sequential", 8).to_dict()
        random_run = run_simulation(config, "random", 8).to_dict()
        sequential.pop("scheduler")
        random_run.pop("scheduler")
        assert sequential == random_run

    def test_contention_forces_waiting_not_crash(self):
        # Three jobs each wanting half of a 12-device fleet must overlap and
        # take turns; the occupied-set invariant still holds.
        config = quiet_config(
            {
                "fleet": {"count": 12, "background_load_max": 0.0},
                "jobs": [
                    {
                        "demand": {"compute": 0.2, "memory": 64.0, "bandwidth": 1.0},
                        "max_rounds": 6,
                        "fraction": 0.5,
                    }
                ]
                * 3,
                "workload": {
                    "samples": 240,
                    "features": 4,
                    "classes": 4,
                    "mode": "surrogate",
                },
                "run": {"seeds": [1]},
            }
        )
        result = run_simulation(config, "random", 17)
        assert all(status == "ok" for status in result.status.values())
        assert_no_device_overlap(result)

    def test_permanent_starvation_is_a_deadlock_error(self):
        config = quiet_config(
            {
                "fleet": {
                    "background_load_max": 0.0,
                    "clusters": [
                        {"count": 1, "resource_ranges": {"compute": [5.0, 5.0]}},
                        {"count": 1, "resource_ranges": {"compute": [1.0, 1.0]}},
                    ],
                },
                "jobs": [
                    {
                        "demand": {"compute": 3.0, "memory": 1.0, "bandwidth": 1.0},
                        "fraction": 1.0,
                        "max_rounds": 2,
                    }
                ],
                "workload": {"samples": 100, "features": 4, "classes": 4, "mode": "surrogate"},
                "run": {"seeds": [1]},
            }
        )
        with pytest.raises(SimulationError, match="deadlock"):
            run_simulation(config, "fedact", 1)

    def test_unschedulable_job_rejected_at_configuration(self):
        config = small_sim_config()
        config.jobs[0].demand.compute = 1e9
        with pytest.raises(ConfigurationError, match="unschedulable"):
            run_simulation(config, "fedact", 1)

    def test_unknown_scheduler_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown scheduler"):
            run_simulation(small_sim_config(), "mystery", 1)

    @pytest.mark.parametrize("scheduler", ["fedact", "genetic", "greedy", "random"])
    def test_global_invariants_on_random_configs(self, scheduler):
        # Engine fuzz: small random surrogate configs must satisfy the global
        # invariants regardless of scheduler and contention level.
        rng = np.random.default_rng(hash(scheduler) % 2**32)
        for _ in range(6):
            fleet_size = int(rng.integers(4, 14))
            job_count = int(rng.integers(1, 4))
            config = quiet_config(
                {
                    "fleet": {"count": fleet_size, "background_load_max": 0.2},
                    "jobs": [
                        {
                            "demand": {
                                "compute": float(rng.uniform(0.1, 0.6)),
                                "memory": float(rng.uniform(16, 128)),
                                "bandwidth": float(rng.uniform(0.5, 2.0)),
                            },
                            "max_rounds": int(rng.integers(2, 8)),
                            "fraction": float(rng.uniform(0.15, 0.6)),
                        }
                        for _ in range(job_count)
                    ],
                    "workload": {
                        "samples": 40 * fleet_size,
                        "features": 4,
                        "classes": 4,
                        "mode": "surrogate",
                    },
                    "run": {"seeds": [1]},
                }
            )
            seed = int(rng.integers(0, 10_000))
            result = run_simulation(config, scheduler, seed)
            assert all(status == "ok" for status in result.status.values())
            assert_no_device_overlap(result)
            counts = np.array(result.participation_counts)
            for job_id in result.job_ids:
                times = [r.cumulative_time for r in result.histories[job_id]]
                assert all(b > a for a, b in zip(times, times[1:]))
                issued = sum(len(r.selected) for r in result.histories[job_id])
                assert counts[:, job_id].sum() == issued
                assert result.jct[job_id] == times[-1]

    def test_diverging_job_fails_without_stopping_others(self, monkeypatch):
        from fedsched import engine as engine_module
        from fedsched.workload import DivergenceError, make_workload

        class Exploding:
            def __init__(self, inner, job_id):
                self.inner = inner
                self.job_id = job_id

            def execute_round(self, selected, streams, round_index):
                if self.job_id == 0 and round_index == 1:
                    raise DivergenceError("synthetic blow-up")
                return self.inner.execute_round(selected, streams, round_index)

        def patched(job, dataset, shards, mode, lr, decay, floor):
            return Exploding(make_workload(job, dataset, shards, mode, lr, decay, floor), job.id)

        monkeypatch.setattr(engine_module, "make_workload", patched)
        config = quiet_config(
            {
                "fleet": {"count": 8, "background_load_max": 0.0},
                "jobs": [
                    {
                        "demand": {"compute": 0.5, "memory": 128.0, "bandwidth": 2.0},
                        "max_rounds": 4,
                        "fraction": 0.25,
                    }
                ]
                * 2,
                "workload": {"samples": 200, "features": 4, "classes": 4, "learning_rate": 0.1},
                "run": {"seeds": [1]},
            }
        )
        result = run_simulation(config, "fedact", 2)
        assert result.status[0].startswith("failed")
        assert result.status[1] == "ok"
        assert result.jct[0] is None
        assert result.jct[1] is not None
        assert result.average_jct is None
        assert len(result.histories[0]) == 1  # only the round before the failure
