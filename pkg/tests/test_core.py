import math

import pytest
from hypothesis import given, strategies as st

from fedsched.core import (
    ConfigurationError,
    FleetRanges,
    ResourceVector,
    SchedulingPlan,
    SpeedRanges,
    apply_background_load,
    devices_per_round,
    eligible,
    generate_fleet,
)

from conftest import make_device, make_job


class TestResourceVector:
    def test_rejects_negative_component(self):
        with pytest.raises(ConfigurationError, match="memory"):
            ResourceVector(1.0, -1.0, 1.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ConfigurationError):
            ResourceVector(math.inf, 1.0, 1.0)

    def test_covers_is_componentwise(self):
        assert ResourceVector(2, 2, 2).covers(ResourceVector(2, 1, 2))
        assert not ResourceVector(2, 2, 2).covers(ResourceVector(2, 3, 2))


class TestDeviceAndJobValidation:
    def test_available_above_capacity_rejected(self):
        with pytest.raises(ConfigurationError, match="exceed capacity"):
            make_device(0, capacity=(1, 1, 1), available=(2, 1, 1))

    def test_zero_capacity_rejected(self):
        with pytest.raises(ConfigurationError, match="> 0"):
            make_device(0, capacity=(0, 1, 1))

    def test_bad_speed_parameters_rejected(self):
        with pytest.raises(ConfigurationError, match="alpha"):
            make_device(0, alpha=0.0)
        with pytest.raises(ConfigurationError, match="mu"):
            make_device(0, mu=-1.0)

    def test_job_fraction_bounds(self):
        with pytest.raises(ConfigurationError, match="fraction"):
            make_job(fraction=0.0)
        with pytest.raises(ConfigurationError, match="fraction"):
            make_job(fraction=1.5)

    def test_plan_rejects_duplicates(self):
        with pytest.raises(ConfigurationError, match="repeats"):
            SchedulingPlan(job_id=0, round_index=0, selected=(1, 1))


class TestGenerateFleet:
    def test_hundred_devices_with_distinct_ids(self):
        fleet = generate_fleet(100, seed=7)
        assert len(fleet) == 100
        assert sorted(d.id for d in fleet) == list(range(100))

    def test_degenerate_ranges_hit_boundary_values(self):
        ranges = FleetRanges(compute=(2.0, 2.0), memory=(64.0, 64.0), bandwidth=(9.0, 9.0))
        speeds = SpeedRanges(alpha=(1e-4, 1e-4), mu=(3.0, 3.0))
        (device,) = generate_fleet(1, ranges, speeds, seed=11)
        assert device.capacity.as_tuple() == (2.0, 64.0, 9.0)
        assert device.alpha == 1e-4
        assert device.mu == 3.0

    def test_same_seed_gives_identical_fleet(self):
        first = generate_fleet(5, seed=42)
        second = generate_fleet(5, seed=42)
        for a, b in zip(first, second):
            assert a.capacity == b.capacity
            assert a.available == b.available
            assert (a.alpha, a.mu) == (b.alpha, b.mu)

    def test_different_seed_changes_fleet(self):
        assert generate_fleet(5, seed=1)[0].capacity != generate_fleet(5, seed=2)[0].capacity

    def test_samples_stay_inside_ranges(self):
        ranges = FleetRanges(compute=(1, 2), memory=(100, 200), bandwidth=(5, 6))
        speeds = SpeedRanges(alpha=(1e-4, 2e-4), mu=(1.0, 2.0))
        for device in generate_fleet(50, ranges, speeds, seed=3):
            assert 1 <= device.capacity.compute <= 2
            assert 100 <= device.capacity.memory <= 200
            assert 5 <= device.capacity.bandwidth <= 6
            assert 1e-4 <= device.alpha <= 2e-4
            assert 1.0 <= device.mu <= 2.0

    def test_available_equals_capacity_at_creation(self):
        for device in generate_fleet(20, seed=5):
            assert device.available == device.capacity

    @pytest.mark.parametrize(
        "ranges, field",
        [
            (FleetRanges(compute=(5.0, 1.0)), "ranges.compute"),
            (FleetRanges(memory=(0.0, 10.0)), "ranges.memory"),
            (FleetRanges(bandwidth=(-1.0, 10.0)), "ranges.bandwidth"),
        ],
    )
    def test_invalid_range_names_offending_field(self, ranges, field):
        with pytest.raises(ConfigurationError, match=field.replace(".", r"\.")):
            generate_fleet(3, ranges, seed=0)

    def test_invalid_speed_range_named(self):
        with pytest.raises(ConfigurationError, match="speed_ranges.mu"):
            generate_fleet(3, speed_ranges=SpeedRanges(mu=(0.0, 1.0)), seed=0)


class TestBackgroundLoad:
    def test_zero_fraction_is_identity(self):
        fleet = generate_fleet(5, seed=1)
        apply_background_load(fleet, 0.0, seed=2)
        for device in fleet:
            assert device.available == device.capacity

    def test_load_keeps_availability_within_capacity(self):
        fleet = generate_fleet(30, seed=1)
        apply_background_load(fleet, 0.3, seed=2)
        for device in fleet:
            assert device.capacity.covers(device.available)
            for name in ("compute", "memory", "bandwidth"):
                assert getattr(device.available, name) >= 0.7 * getattr(
                    device.capacity, name
                ) - 1e-12

    def test_rejects_fraction_of_one(self):
        with pytest.raises(ConfigurationError):
            apply_background_load(generate_fleet(1, seed=0), 1.0, seed=0)


class TestEligible:
    def test_boundary_equality_is_eligible(self):
        device = make_device(0, capacity=(4, 4, 4))
        assert eligible(device, make_job(demand=(4, 4, 4)))

    def test_single_component_violation(self):
        device = make_device(0, capacity=(4, 4, 4))
        assert not eligible(device, make_job(demand=(4, 5, 4)))

    def test_zero_demand_always_eligible(self):
        device = make_device(0, capacity=(4, 4, 4), available=(0, 0, 0))
        assert eligible(device, make_job(demand=(0, 0, 0)))

    @given(
        avail=st.tuples(*[st.floats(0, 100) for _ in range(3)]),
        demand=st.tuples(*[st.floats(0, 100) for _ in range(3)]),
        bump=st.floats(0, 50),
        component=st.integers(0, 2),
    )
    def test_monotone_in_availability(self, avail, demand, bump, component):
        cap = tuple(max(a, 1.0) + 100 for a in avail)
        device = make_device(0, capacity=cap, available=avail)
        job = make_job(demand=demand)
        before = eligible(device, job)
        raised = list(avail)
        raised[component] += bump
        device_up = make_device(0, capacity=cap, available=tuple(raised))
        if before:
            assert eligible(device_up, job)


class TestDevicesPerRound:
    @pytest.mark.parametrize(
        "fraction, fleet, expected",
        [(0.1, 100, 10), (0.5, 10, 5), (0.01, 10, 1), (1.0, 7, 7), (0.25, 10, 3)],
    )
    def test_rounding_with_floor_one(self, fraction, fleet, expected):
        assert devices_per_round(fraction, fleet) == expected
