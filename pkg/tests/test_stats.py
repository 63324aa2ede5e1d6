"""Residency, energy, and percentile accounting.

Energy oracles here are computed by hand: a ledger with known intervals
times known watts, summed on paper, then asserted exactly. The
conservation property (residencies sum to elapsed time) is the bedrock
the fleet-level conservation suite builds on.
"""

import pytest
from hypothesis import given, settings, strategies as st

from dcsim.stats import (
    EnergyAccount,
    LatencyRecorder,
    ResidencyLedger,
    TimeSeries,
    fmt,
    percentile,
    split_transition_label,
    transition_label,
)


def test_ledger_accumulates_per_state():
    led = ResidencyLedger("x", "idle", now=0)
    led.on_transition("busy", 100)
    led.on_transition("idle", 250)
    led.on_transition("sleep", 400)
    led.finalize(1_000)
    assert led.residency_us("idle") == 100 + 150
    assert led.residency_us("busy") == 150
    assert led.residency_us("sleep") == 600
    assert led.total_us() == 1_000


def test_ledger_finalize_idempotent_at_same_time():
    led = ResidencyLedger("x", "a", now=0)
    led.on_transition("b", 10)
    led.finalize(50)
    before = dict(led.durations)
    led.finalize(50)  # zero-length flush changes nothing
    assert led.durations == before


def test_ledger_rejects_time_travel():
    led = ResidencyLedger("x", "a", now=100)
    with pytest.raises(ValueError):
        led.on_transition("b", 99)


def test_ledger_nonzero_start_stamp():
    led = ResidencyLedger("x", "a", now=500)
    led.finalize(700)
    assert led.total_us() == 200


@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c", "t:a>b"]),
                          st.integers(min_value=0, max_value=1_000)),
                max_size=50))
@settings(max_examples=200, deadline=None)
def test_ledger_conservation_property(steps):
    # Arbitrary transition sequences: total residency always equals
    # elapsed time, regardless of state labels or dwell lengths.
    led = ResidencyLedger("x", "a", now=0)
    now = 0
    for state, dwell in steps:
        now += dwell
        led.on_transition(state, now)
    led.finalize(now + 7)
    assert led.total_us() == now + 7


def test_transition_label_round_trip():
    lab = transition_label("pkg_c0", "pkg_c6")
    assert lab == "t:pkg_c0>pkg_c6"
    assert split_transition_label(lab) == ("pkg_c0", "pkg_c6")
    assert split_transition_label("pkg_c0") is None


def test_energy_hand_computed_integral():
    # 2 s at 10 W plus 3 s at 1 W = 23 J, exactly representable.
    led = ResidencyLedger("comp", "hot", now=0)
    led.on_transition("cool", 2_000_000)
    led.finalize(5_000_000)
    acct = EnergyAccount()
    acct.register("server", led, {"hot": 10.0, "cool": 1.0}.get)
    assert acct.group_energy_j("server") == 23.0
    assert acct.total_energy_j() == 23.0
    assert acct.group_energy_j("network") == 0.0


def test_energy_missing_state_is_hard_error():
    led = ResidencyLedger("comp", "hot", now=0)
    led.finalize(1_000)
    acct = EnergyAccount()
    acct.register("server", led, {}.get)
    with pytest.raises(KeyError):
        acct.group_energy_j("server")


def test_energy_rejects_unknown_group():
    acct = EnergyAccount()
    led = ResidencyLedger("c", "s", now=0)
    with pytest.raises(ValueError):
        acct.register("cooling", led, lambda s: 0.0)


@given(st.lists(st.tuples(st.sampled_from(["server", "network"]),
                          st.integers(min_value=0, max_value=10_000),
                          st.floats(min_value=0, max_value=100)),
                min_size=1, max_size=20))
@settings(max_examples=100, deadline=None)
def test_energy_additivity_property(components):
    # total == server subtotal + network subtotal for any registration mix
    acct = EnergyAccount()
    for i, (group, dur, watts) in enumerate(components):
        led = ResidencyLedger(f"c{i}", "on", now=0)
        led.finalize(dur)
        acct.register(group, led, {"on": watts}.get)
    total = acct.total_energy_j()
    assert total == acct.group_energy_j("server") + acct.group_energy_j("network")


def test_energy_finalize_flushes_all_registered():
    acct = EnergyAccount()
    leds = [ResidencyLedger(f"c{i}", "on", now=0) for i in range(3)]
    for led in leds:
        acct.register("network", led, {"on": 2.0}.get)
    acct.finalize(500_000)
    assert all(led.total_us() == 500_000 for led in leds)
    assert acct.total_energy_j() == pytest.approx(3.0, abs=1e-12)
    assert len(acct.ledgers("network")) == 3
    assert acct.ledgers("server") == []


def test_percentile_nearest_rank_pinned():
    data = list(range(1, 101))  # 1..100
    assert percentile(data, 0.95) == 95
    assert percentile(data, 0.50) == 50
    assert percentile(data, 1.0) == 100
    assert percentile(data, 0.001) == 1
    assert percentile([7], 0.99) == 7
    # rank = ceil(0.95 * 3) = 3 -> third smallest
    assert percentile([30, 10, 20], 0.95) == 30


def test_percentile_validation():
    with pytest.raises(ValueError):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1], 0.0)
    with pytest.raises(ValueError):
        percentile([1], 1.5)


@given(st.lists(st.integers(min_value=0, max_value=10**9), min_size=1,
                max_size=200),
       st.floats(min_value=0.01, max_value=0.99),
       st.floats(min_value=0.01, max_value=0.99))
@settings(max_examples=200, deadline=None)
def test_percentile_monotone_in_p(samples, p1, p2):
    lo, hi = sorted((p1, p2))
    assert percentile(samples, lo) <= percentile(samples, hi)
    assert min(samples) <= percentile(samples, lo)
    assert percentile(samples, hi) <= max(samples)


def test_latency_recorder_basics():
    rec = LatencyRecorder()
    for v in (5_000, 1_000, 3_000):
        rec.record(v)
    assert rec.count() == 3
    assert rec.mean_us() == 3_000
    assert rec.max_us() == 5_000
    assert rec.percentile_us(0.5) == 3_000
    with pytest.raises(ValueError):
        rec.record(-1)


def test_latency_recorder_empty_errors():
    rec = LatencyRecorder()
    with pytest.raises(ValueError):
        rec.mean_us()
    with pytest.raises(ValueError):
        rec.max_us()


def test_fmt_pins_float_width():
    assert fmt(1.0) == "1.000000"
    assert fmt(20.22) == "20.220000"
    assert fmt(145584.0) == "145584.000000"
    assert fmt(3) == "3"
    assert fmt(True) == "1"
    assert fmt("star") == "star"


def test_timeseries_rejects_bad_interval_and_regressing_time():
    with pytest.raises(ValueError):
        TimeSeries(0)
    ts = TimeSeries(1_000_000)
    ts.sample(1_000_000, 4, 0, 100.0, 2)
    with pytest.raises(ValueError):
        ts.sample(1_000_000, 4, 0, 100.0, 2)
    ts.sample(2_000_000, 4, 1, 101.5, 2)
    assert len(ts.rows) == 2


def test_csv_writers_fixed_format(tmp_path):
    from dcsim.stats import write_summary_csv, write_timeseries_csv
    summary = tmp_path / "summary.csv"
    write_summary_csv(str(summary), [("jobs", 10), ("energy_j", 1.5)])
    assert summary.read_text() == "key,value\njobs,10\nenergy_j,1.500000\n"
    ts = TimeSeries(1_000_000)
    ts.sample(1_000_000, 2, 3, 43.4, 1)
    series = tmp_path / "timeseries.csv"
    write_timeseries_csv(str(series), ts)
    assert series.read_text() == (
        "time_s,active_servers,pending_jobs,fleet_power_w,awake_switches\n"
        "1.000000,2,3,43.400000,1\n")
