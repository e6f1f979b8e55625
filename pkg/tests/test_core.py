import math

import pytest
from hypothesis import given, strategies as st

from loopbench.core import (
    ComponentId,
    Energy,
    Limit,
    PowerSample,
    Temperature,
    ValueTrace,
    generate_trace,
    integrate_energy,
    should_trigger,
)
from loopbench.errors import InvalidSampleStream, InvalidTraceLength

from oracles import dense_integral

SENSOR = ComponentId("sensor-1", "sensor")


def samples(pairs):
    return [PowerSample(SENSOR, t, p) for t, p in pairs]


class TestTypes:
    def test_temperature_range(self):
        assert Temperature(25) == 25.0
        for bad in (-50.1, 100.1, math.nan, math.inf):
            with pytest.raises(ValueError):
                Temperature(bad)

    def test_limit_default(self):
        assert float(Limit()) == 25.0

    def test_energy_non_negative(self):
        with pytest.raises(ValueError):
            Energy(-1.0)

    def test_component_kind(self):
        with pytest.raises(ValueError):
            ComponentId("x", "controller")


@pytest.mark.parametrize("value, limit, expected", [
    (24.9, 25.0, False),
    (25.0, 25.0, True),
    (30.0, 25.0, True),
])
def test_should_trigger(value, limit, expected):
    assert should_trigger(value, limit) is expected
    assert should_trigger(Temperature(value), Limit(limit)) is expected


class TestGenerateTrace:
    def test_block_structure_default(self):
        trace = generate_trace(100, 25, seed=1)
        assert len(trace) == 100
        assert all(v < 25 for v in trace.values[:50])
        assert all(v >= 25 for v in trace.values[50:])

    def test_empty(self):
        assert len(generate_trace(0, 25, seed=7)) == 0

    def test_trigger_count_by_enumeration(self):
        trace = generate_trace(10, 25, seed=42)
        count = 0
        for v in trace:
            if should_trigger(v, 25):
                count += 1
        assert count == 5

    def test_odd_length(self):
        with pytest.raises(InvalidTraceLength):
            generate_trace(3, 25, 0)

    @pytest.mark.parametrize("distribution", ["uniform", "regular"])
    def test_bands(self, distribution):
        trace = generate_trace(40, 20, seed=3, distribution=distribution)
        assert all(10 <= v <= 19 for v in trace.values[:20])
        assert all(21 <= v <= 30 for v in trace.values[20:])

    def test_regular_is_evenly_spaced(self):
        trace = generate_trace(6, 25, distribution="regular")
        assert list(trace.values) == [15.0, 19.5, 24.0, 26.0, 30.5, 35.0]

    @given(st.integers(0, 100).map(lambda k: 2 * k), st.integers(-35, 85), st.integers(0, 2**32))
    def test_pure_and_half_triggering(self, n, limit, seed):
        a = generate_trace(n, limit, seed)
        b = generate_trace(n, limit, seed)
        assert a.values == b.values
        assert sum(should_trigger(v, limit) for v in a) == n // 2

    def test_csv_round_trip(self):
        trace = generate_trace(8, 25, seed=5)
        text = trace.to_csv()
        assert text.splitlines()[0] == "index,value,above_limit"
        assert [line.split(",")[2] for line in text.splitlines()[1:]] == ["0"] * 4 + ["1"] * 4
        assert ValueTrace.from_csv(text, 25, 5) == trace


class TestIntegrateEnergy:
    def test_constant(self):
        assert integrate_energy(samples([(0, 100.0), (10_000_000, 100.0)])).amount == 1000.0

    def test_single_sample(self):
        assert integrate_energy(samples([(0, 100.0)])).amount == 0.0
        assert integrate_energy([]).amount == 0.0

    def test_linear_ramp_against_dense_oracle(self):
        ramp = samples([(k * 1_000_000, 10.0 * k) for k in range(11)])
        oracle = dense_integral(lambda t: 10.0 * t, 0.0, 10.0)
        # trapezoid error bound is (b-a) h^2 max|f''| / 12 = 0 for a ramp
        assert integrate_energy(ramp).amount == pytest.approx(oracle, abs=1e-6)
        assert integrate_energy(ramp).amount == pytest.approx(500.0, abs=1e-9)

    @pytest.mark.parametrize("pairs", [
        [(0, 1.0), (5, 1.0), (5, 1.0)],
        [(0, 1.0), (10, 1.0), (5, 1.0)],
    ])
    def test_rejects_unsorted(self, pairs):
        with pytest.raises(InvalidSampleStream):
            integrate_energy(samples(pairs))

    @given(st.lists(st.tuples(st.integers(1, 10_000), st.floats(0, 5000)), min_size=2, max_size=40),
           st.integers(1, 39))
    def test_additivity(self, steps, cut):
        t, pairs = 0, []
        for dt, p in steps:
            t += dt
            pairs.append((t, p))
        cut = min(cut, len(pairs) - 1)
        first, second = pairs[: cut + 1], pairs[cut:]
        whole = integrate_energy(samples(pairs)).amount
        parts = integrate_energy(samples(first)).amount + integrate_energy(samples(second)).amount
        assert abs(whole - parts) <= 1e-9

    @given(st.floats(0, 1e4), st.integers(1, 10**9))
    def test_constant_exact(self, p, duration):
        got = integrate_energy(samples([(0, p), (duration, p)])).amount
        assert got == pytest.approx(p * duration / 1e6, rel=1e-12, abs=1e-12)
