from __future__ import annotations

import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerwrap.analysis import (
    AggregateCurve,
    PowerSeries,
    aggregate,
    analyze_directory,
    compare,
    emit_plot,
    load_runs,
    power_series,
    randomized_schedule,
    read_plot_data,
)
from powerwrap.probes.metrics import CounterFormat, Domain, Kind, MetricDescriptor, Unit
from powerwrap.probes.simulated import Playback
from powerwrap.simulate import simulate_trace
from powerwrap.trace import Sample, Trace, TraceMeta, summarize, write_csv


def linear_percentile(values, q):
    """Order-statistic interpolation written out by hand (oracle for numpy)."""
    xs = sorted(values)
    pos = q / 100 * (len(xs) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def series(values, run_id="r", interval=100):
    return PowerSeries(run_id, np.array(values, dtype=float), interval)


def cumulative_trace(joules, interval=100, counter=None):
    m = MetricDescriptor("PACKAGE_ENERGY", Unit.JOULES, Kind.CUMULATIVE_ENERGY, Domain.PACKAGE, counter=counter)
    rows = [Sample(0.0 if i == 0 else float(interval), i * interval, {m.name: j}) for i, j in enumerate(joules)]
    return Trace([m], rows, TraceMeta(interval_ms=interval))


def burst_profile(base=2.0, extra=8.0, start=3.0, length=1.0):
    eps = 1e-9
    t = [0.0, start - eps, start, start + length - eps, start + length]
    w = [base, base, base + extra, base + extra, base]
    return Playback(np.array(t), np.array(w))


class TestPowerSeries:
    def test_constant_differencing_drops_leading_sample(self):
        s = power_series(cumulative_trace([0.0, 1.0, 2.0]))
        assert s.watts.tolist() == [10.0, 10.0]
        assert s.interval_ms == 100

    def test_power_column_is_copied(self):
        trace = simulate_trace("sinusoid:5,3,1", 1.0)
        s = power_series(trace, source="PACKAGE_POWER")
        assert s.watts.tolist() == trace.column("PACKAGE_POWER").tolist()

    def test_step_transition_index(self):
        trace = simulate_trace("step:1.5,1,11", 3.0)
        w = power_series(trace).watts
        first_high = int(np.argmax(w > 6))
        assert abs(first_high - 15) <= 1

    def test_wrap_inside_series(self):
        fmt = CounterFormat(1.0, 8)
        s = power_series(cumulative_trace([250.0, 254.0, 2.0, 6.0], counter=fmt))
        assert s.watts.tolist() == [40.0, 40.0, 40.0]

    def test_gap_spreads_energy(self):
        s = power_series(cumulative_trace([0.0, None, 2.0, 3.0]))
        assert s.watts.tolist() == [10.0, 10.0, 10.0]

    def test_energy_conservation(self):
        for profile in ("constant:7", "step:0.75,2,9", "sinusoid:4,3,0.8"):
            trace = simulate_trace(profile, 2.3)
            s = power_series(trace)
            deltas = np.array([r.delta_ms for r in trace.rows[1:]]) / 1000
            assert float(np.sum(s.watts * deltas)) == pytest.approx(summarize(trace).total_energy_j, rel=1e-6)

    def test_usage_only_rejected(self):
        m = MetricDescriptor("CPU_USAGE_0", Unit.PERCENT, Kind.GAUGE, Domain.CORE, 0)
        trace = Trace([m], [Sample(0.0, 0, {m.name: 1.0}), Sample(100.0, 100, {m.name: 2.0})])
        with pytest.raises(ValueError):
            power_series(trace)

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            series([1.0, -1.0])


class TestAggregate:
    def test_degenerate(self):
        curve = aggregate([series([5.0] * 10) for _ in range(3)])
        assert np.all(curve.mean == 5) and np.all(curve.q1 == 5) and np.all(curve.q3 == 5)
        assert curve.n_runs == 3 and curve.length == 10

    def test_three_level_quartiles(self):
        runs = [series([1.0] * 4), series([2.0] * 4), series([3.0] * 4)]
        curve = aggregate(runs)
        assert linear_percentile([1, 2, 3], 25) == 1.5
        assert linear_percentile([1, 2, 3], 75) == 2.5
        assert curve.mean.tolist() == [2.0] * 4
        assert curve.q1.tolist() == [1.5] * 4
        assert curve.q3.tolist() == [2.5] * 4

    def test_matches_hand_percentiles(self):
        rng = random.Random(3)
        runs = [series([rng.uniform(0, 50) for _ in range(12)], f"r{k}") for k in range(7)]
        curve = aggregate(runs)
        for i in range(12):
            column = [r.watts[i] for r in runs]
            assert curve.q1[i] == pytest.approx(linear_percentile(column, 25), rel=1e-12)
            assert curve.q3[i] == pytest.approx(linear_percentile(column, 75), rel=1e-12)
            assert curve.q1[i] <= curve.q3[i]

    def test_truncates_to_shortest(self):
        curve = aggregate([series([1.0] * 10), series([1.0] * 7)])
        assert curve.length == 7 and len(curve.q1) == 7 and len(curve.q3) == 7

    def test_mixed_intervals(self):
        with pytest.raises(ValueError):
            aggregate([series([1.0], interval=100), series([1.0], interval=50)])

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            aggregate([series([1.0])])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(0, 1e4), min_size=5, max_size=5), min_size=2, max_size=8),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, rows, rnd):
        runs = [series(r) for r in rows]
        shuffled = runs[:]
        rnd.shuffle(shuffled)
        a, b = aggregate(runs), aggregate(shuffled)
        assert np.allclose(a.mean, b.mean, rtol=1e-12, atol=0)
        assert np.array_equal(a.q1, b.q1) and np.array_equal(a.q3, b.q3)

    def test_noisy_mean_statistical_oracle(self):
        sigma, n = 0.5, 20
        runs = [power_series(simulate_trace("step:3,2,10", 10.0, noise_w=sigma, seed=k), f"r{k}",
                             source="PACKAGE_POWER") for k in range(n)]
        curve = aggregate(runs)
        truth = np.array([2.0 if i * 0.1 < 3 else 10.0 for i in range(curve.length)])
        assert np.all(np.abs(curve.mean - truth) <= 3 * sigma / math.sqrt(n))


class TestCompare:
    def test_self_comparison_is_zero(self):
        curve = aggregate([series([1.0, 4.0, 2.0]), series([3.0, 2.0, 2.0])])
        rep = compare(curve, curve)
        assert np.all(rep.difference_w == 0) and rep.energy_difference_j == 0
        assert rep.workload_peak_index == rep.idle_peak_index

    def test_burst_energy(self):
        idle = aggregate([power_series(simulate_trace("constant:2", 10.0)) for _ in range(3)])
        work = aggregate([power_series(simulate_trace(burst_profile(), 10.0)) for _ in range(3)])
        rep = compare(work, idle)
        assert rep.energy_difference_j == pytest.approx(8.0, rel=0.02)
        assert rep.workload_peak_w == pytest.approx(10.0, rel=1e-4)

    def test_peak_index_of_step(self):
        # the power channel is free of counter quantization, so the plateau is flat
        def curve(profile):
            return aggregate([power_series(simulate_trace(profile, 6.0), source="PACKAGE_POWER")
                              for _ in range(2)])

        rep = compare(curve("step:3,2,10"), curve("constant:2"))
        assert abs(rep.workload_peak_index - 30) <= 1
        assert rep.idle_peak_index == 0

    def test_interval_mismatch(self):
        a = AggregateCurve(np.ones(2), np.ones(2), np.ones(2), 2, 100)
        b = AggregateCurve(np.ones(2), np.ones(2), np.ones(2), 2, 50)
        with pytest.raises(ValueError):
            compare(a, b)


class TestSchedule:
    def test_counts_and_length(self):
        plan = randomized_schedule(["chrome", "idle"], 20, seed=1)
        assert len(plan) == 40
        assert Counter(r.condition for r in plan) == {"chrome": 20, "idle": 20}
        assert [r.order for r in plan] == list(range(40))

    def test_deterministic(self):
        assert randomized_schedule(["a", "b", "c"], 5, seed=9) == randomized_schedule(["a", "b", "c"], 5, seed=9)

    def test_repetition_numbers(self):
        plan = randomized_schedule(["a", "b"], 4, seed=2)
        for cond in "ab":
            assert [r.repetition for r in plan if r.condition == cond] == [0, 1, 2, 3]

    @given(st.integers(0, 2**63), st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=4, unique=True),
           st.integers(1, 25))
    def test_multiset_for_any_seed(self, seed, conditions, reps):
        plan = randomized_schedule(conditions, reps, seed)
        assert sorted(r.condition for r in plan) == sorted(c for c in conditions for _ in range(reps))

    def test_errors(self):
        with pytest.raises(ValueError):
            randomized_schedule([], 3)
        with pytest.raises(ValueError):
            randomized_schedule(["a"], 0)


class TestPlot:
    def test_constant_curve_zero_band(self, tmp_path):
        curve = aggregate([series([5.0] * 8) for _ in range(2)])
        image, data = emit_plot({"idle": curve}, tmp_path / "p.svg")
        assert image.read_text().lstrip().startswith("<?xml")
        got = read_plot_data(data)["idle"]
        assert np.all(got["q3"] - got["q1"] == 0)

    def test_two_curves_exact_numbers(self, tmp_path):
        rng = np.random.default_rng(0)
        curves = {
            "chrome": aggregate([series(rng.uniform(0, 40, 30)) for _ in range(5)]),
            "idle": aggregate([series(rng.uniform(0, 10, 25)) for _ in range(5)]),
        }
        _, data = emit_plot(curves, tmp_path / "fig.svg")
        got = read_plot_data(data)
        assert set(got) == {"chrome", "idle"}
        for label, curve in curves.items():
            assert np.array_equal(got[label]["mean"], curve.mean)
            assert np.array_equal(got[label]["q1"], curve.q1)
            assert np.array_equal(got[label]["q3"], curve.q3)

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            emit_plot({}, tmp_path / "x.svg")


def test_directory_layout(tmp_path):
    runs = tmp_path / "runs"
    for cond, profile in (("idle", "constant:2"), ("chrome", "step:1,2,10")):
        (runs / cond).mkdir(parents=True)
        for k in range(3):
            write_csv(simulate_trace(profile, 2.0), runs / cond / f"run_{k}.csv")
    loaded = load_runs(runs)
    assert sorted(loaded) == ["chrome", "idle"]
    assert [rid for rid, _ in loaded["idle"]] == ["run_0", "run_1", "run_2"]
    result = analyze_directory(runs, tmp_path / "out")
    assert result.image_path.exists() and result.data_path.exists()
    text = result.report_path.read_text()
    assert "energy difference (chrome - idle)" in text
    assert result.comparisons["chrome"].energy_difference_j == pytest.approx(8.0, rel=0.02)
