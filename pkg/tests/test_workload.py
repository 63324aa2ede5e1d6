"""Arrival processes, trace parsing, size sampling, DAG templates.

Distribution checks use analytic moments (mean of an exponential, a KS
distance against the known CDF) rather than golden random numbers, so
the tests would survive a reseeding of the streams without weakening.
"""

import io
import math

import pytest
from hypothesis import given, settings, strategies as st

from dcsim.engine import RngStream
from dcsim.workload import (
    ArrivalTrace,
    EdgeTemplate,
    JobTemplate,
    MmppState,
    SizeDistribution,
    TaskTemplate,
    critical_path_us,
    instantiate_job,
    load_trace,
    poisson_interarrival,
    synthesize_bursty_arrivals,
    utilization_to_arrival_rate,
    write_trace,
)


def _const(seconds: float) -> SizeDistribution:
    return SizeDistribution("constant", value_s=seconds)


# --- arrival rate arithmetic -------------------------------------------

def test_utilization_to_arrival_rate_formula():
    # rho * mu * servers * cores, checked against the hand expansion:
    # 0.3 load on 16 cores at 200 jobs/s/core = 960 jobs/s fleet-wide.
    assert utilization_to_arrival_rate(0.3, 200.0, 4, 4) == pytest.approx(960.0)
    assert utilization_to_arrival_rate(1.0, 1.0, 1, 1) == 1.0
    with pytest.raises(ValueError):
        utilization_to_arrival_rate(-0.1, 200.0, 4, 4)
    with pytest.raises(ValueError):
        utilization_to_arrival_rate(0.3, 0.0, 4, 4)


def test_poisson_interarrival_mean_matches_rate():
    rng = RngStream(7, "arrivals")
    rate = 50.0
    n = 200_000
    total = sum(poisson_interarrival(rng, rate) for _ in range(n))
    # Sample mean of Exp(1/50); standard error ~ (1/50)/sqrt(n) so 1%
    # is a > 5-sigma band.
    assert total / n == pytest.approx(1.0 / rate, rel=0.01)
    with pytest.raises(ValueError):
        poisson_interarrival(rng, 0.0)


# --- MMPP ----------------------------------------------------------------

def test_mmpp_validation_and_stationary_math():
    m = MmppState(rate_high_per_s=100.0, rate_low_per_s=10.0,
                  switch_high_to_low_per_s=1.0, switch_low_to_high_per_s=3.0)
    assert m.stationary_high_fraction() == pytest.approx(0.75)
    assert m.long_run_rate_per_s() == pytest.approx(0.75 * 100 + 0.25 * 10)
    assert m.burstiness_ratio() == pytest.approx(10.0)
    with pytest.raises(ValueError):
        MmppState(0.0, 10.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MmppState(100.0, 10.0, 1.0, 1.0, phase="mid")


def test_mmpp_equal_rates_degenerates_to_poisson():
    # With rate_high == rate_low the phase is irrelevant and gaps are
    # iid Exp(rate). Kolmogorov-Smirnov distance against the exponential
    # CDF must sit under the asymptotic 1% critical value 1.63/sqrt(n).
    rate = 40.0
    m = MmppState(rate, rate, switch_high_to_low_per_s=5.0,
                  switch_low_to_high_per_s=5.0)
    rng = RngStream(3, "arrivals")
    n = 20_000
    gaps = sorted(m.next_arrival(rng) for _ in range(n))
    d = 0.0
    for i, g in enumerate(gaps):
        cdf = 1.0 - math.exp(-rate * g)
        d = max(d, abs(cdf - i / n), abs(cdf - (i + 1) / n))
    assert d < 1.63 / math.sqrt(n)


def test_mmpp_long_run_rate_observed():
    # Strongly bimodal process: the empirical rate over a long horizon
    # has to match the stationary mixture, not either phase rate.
    m = MmppState(rate_high_per_s=200.0, rate_low_per_s=2.0,
                  switch_high_to_low_per_s=4.0, switch_low_to_high_per_s=1.0)
    rng = RngStream(11, "arrivals")
    n = 100_000
    total = sum(m.next_arrival(rng) for _ in range(n))
    observed = n / total
    assert observed == pytest.approx(m.long_run_rate_per_s(), rel=0.05)


# --- traces --------------------------------------------------------------

def test_load_trace_skips_comments_and_blanks():
    text = "# header\n\n0.5\n1.0\n  \n# tail\n2.25\n"
    tr = load_trace(io.StringIO(text), unit="s")
    assert tr.timestamps_us == [500_000, 1_000_000, 2_250_000]
    assert tr.sort_warnings == 0
    assert len(tr) == 3


def test_load_trace_units():
    assert load_trace(io.StringIO("1.5\n"), unit="ms").timestamps_us == [1_500]
    assert load_trace(io.StringIO("7\n"), unit="us").timestamps_us == [7]
    with pytest.raises(ValueError):
        load_trace(io.StringIO("1\n"), unit="ns")


def test_load_trace_errors_name_line_numbers():
    with pytest.raises(ValueError, match="line 3"):
        load_trace(io.StringIO("1.0\n2.0\nbogus\n"))
    with pytest.raises(ValueError, match="line 2"):
        load_trace(io.StringIO("1.0\n-0.5\n"))


def test_load_trace_sorts_and_counts_inversions():
    tr = load_trace(io.StringIO("3.0\n1.0\n2.0\n0.5\n"))
    assert tr.timestamps_us == sorted(tr.timestamps_us)
    assert tr.sort_warnings == 2  # 3.0->1.0 and 2.0->0.5


def test_write_trace_round_trip(tmp_path):
    stamps = [0.125, 1.5, 2.75]
    path = tmp_path / "t.trace"
    write_trace(str(path), stamps)
    with open(path) as fh:
        tr = load_trace(fh, unit="s")
    assert tr.timestamps_us == [125_000, 1_500_000, 2_750_000]


# --- size distributions ---------------------------------------------------

def test_size_constant_exact():
    d = _const(0.005)
    rng = RngStream(1, "sizes")
    assert d.sample_us(rng) == 5_000
    assert d.mean() == 0.005


def test_size_uniform_bounds_and_mean():
    d = SizeDistribution("uniform", low_s=0.001, high_s=0.003)
    rng = RngStream(2, "sizes")
    draws = [d.sample_us(rng) for _ in range(50_000)]
    assert all(1_000 <= x <= 3_000 for x in draws)
    assert sum(draws) / len(draws) == pytest.approx(2_000, rel=0.01)
    assert d.mean() == pytest.approx(0.002)


def test_size_exponential_mean_analytic():
    d = SizeDistribution("exponential", mean_s=0.005)
    rng = RngStream(3, "sizes")
    n = 1_000_000
    total = sum(d.sample_us(rng) for _ in range(n))
    assert total / n == pytest.approx(5_000, rel=0.01)


def test_size_minimum_one_microsecond():
    d = SizeDistribution("exponential", mean_s=1e-9)
    rng = RngStream(4, "sizes")
    assert all(d.sample_us(rng) >= 1 for _ in range(1_000))


def test_size_validation():
    with pytest.raises(ValueError):
        SizeDistribution("constant", value_s=0.0)
    with pytest.raises(ValueError):
        SizeDistribution("uniform", low_s=0.0, high_s=1.0)
    with pytest.raises(ValueError):
        SizeDistribution("uniform", low_s=2.0, high_s=1.0)
    with pytest.raises(ValueError):
        SizeDistribution("exponential", mean_s=-1.0)
    with pytest.raises(ValueError):
        SizeDistribution("pareto", mean_s=1.0)


# --- job templates ---------------------------------------------------------

def _template(names_edges):
    names, edges = names_edges
    return JobTemplate(
        tasks=tuple(TaskTemplate(n, "web", _const(0.001)) for n in names),
        edges=tuple(EdgeTemplate(a, b, 0) for a, b in edges),
    )


def test_template_validation_errors():
    with pytest.raises(ValueError, match="duplicate task"):
        _template((["a", "a"], []))
    with pytest.raises(ValueError, match="unknown task"):
        _template((["a"], [("a", "ghost")]))
    with pytest.raises(ValueError, match="self edge"):
        _template((["a"], [("a", "a")]))
    with pytest.raises(ValueError, match="duplicate edge"):
        _template((["a", "b"], [("a", "b"), ("a", "b")]))
    with pytest.raises(ValueError, match="cycle"):
        _template((["a", "b", "c"], [("a", "b"), ("b", "c"), ("c", "a")]))


def test_template_mean_work_and_types():
    t = JobTemplate(
        tasks=(TaskTemplate("a", "web", _const(0.002)),
               TaskTemplate("b", "db", _const(0.003))),
        edges=(EdgeTemplate("a", "b", 1_000),),
    )
    assert t.mean_total_work_s() == pytest.approx(0.005)
    assert t.task_types() == {"web", "db"}


def test_instantiate_job_wires_dag():
    t = JobTemplate(
        tasks=(TaskTemplate("root", "web", _const(0.001)),
               TaskTemplate("mid", "web", _const(0.002)),
               TaskTemplate("leaf", "web", _const(0.003))),
        edges=(EdgeTemplate("root", "mid", 500),
               EdgeTemplate("root", "leaf", 0),
               EdgeTemplate("mid", "leaf", 0)),
    )
    job = instantiate_job(t, RngStream(1, "sizes"), job_id=9, arrival_us=100)
    assert job.job_id == 9 and job.arrival_us == 100
    root, mid, leaf = job.tasks
    assert [t.size_us for t in job.tasks] == [1_000, 2_000, 3_000]
    assert root.remaining_parents == 0
    assert mid.remaining_parents == 1
    assert leaf.remaining_parents == 2
    assert [c.name for c, _ in root.children] == ["mid", "leaf"]
    assert root.children[0][1] == 500  # transfer size rides the edge
    assert job.root_tasks() == [root]
    assert not job.is_complete()
    with pytest.raises(ValueError):
        job.sojourn_us()


def test_critical_path_hand_oracle():
    # Diamond with a long left arm: a(1) -> b(5) -> d(2) vs a -> c(1) -> d.
    t = JobTemplate(
        tasks=(TaskTemplate("a", "w", _const(0.000001)),
               TaskTemplate("b", "w", _const(0.000005)),
               TaskTemplate("c", "w", _const(0.000001)),
               TaskTemplate("d", "w", _const(0.000002))),
        edges=(EdgeTemplate("a", "b", 0), EdgeTemplate("a", "c", 0),
               EdgeTemplate("b", "d", 0), EdgeTemplate("c", "d", 0)),
    )
    job = instantiate_job(t, RngStream(1, "sizes"), 0, 0)
    assert critical_path_us(job) == 1 + 5 + 2


@given(st.integers(min_value=1, max_value=6), st.data())
@settings(max_examples=100, deadline=None)
def test_critical_path_bounds_property(n, data):
    # Random DAG on n nodes (edges only i -> j for i < j keeps it
    # acyclic): the critical path is at least the largest task and at
    # most the serial sum.
    sizes = data.draw(st.lists(st.integers(min_value=1, max_value=1_000),
                               min_size=n, max_size=n))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if data.draw(st.booleans()):
                edges.append((f"t{i}", f"t{j}"))
    t = JobTemplate(
        tasks=tuple(TaskTemplate(f"t{i}", "w", _const(sizes[i] / 1e6))
                    for i in range(n)),
        edges=tuple(EdgeTemplate(a, b, 0) for a, b in edges),
    )
    job = instantiate_job(t, RngStream(1, "sizes"), 0, 0)
    cp = critical_path_us(job)
    assert max(sizes) <= cp <= sum(sizes)


# --- synthesized bursty trace ----------------------------------------------

def test_synthesize_bursty_deterministic_sorted_in_range():
    a = synthesize_bursty_arrivals(20.0, 0.3, 20, 0.005, seed="0.3/1")
    b = synthesize_bursty_arrivals(20.0, 0.3, 20, 0.005, seed="0.3/1")
    c = synthesize_bursty_arrivals(20.0, 0.3, 20, 0.005, seed="0.3/2")
    assert a == b
    assert a != c
    assert a == sorted(a)
    assert all(0 <= t < 20.0 for t in a)
    # jobs_per_cycle = 0.3 * 8 * 20 / 0.005 = 9600; two full cycles in
    # 20 s plus a partial third burst, so the count lands near 2.5x.
    assert 15_000 < len(a) < 30_000


def test_synthesize_bursty_load_scaling():
    lo = synthesize_bursty_arrivals(30.0, 0.1, 20, 0.005, seed="x")
    hi = synthesize_bursty_arrivals(30.0, 0.6, 20, 0.005, seed="x")
    assert len(hi) > 4 * len(lo)


def test_synthesize_bursty_validation():
    with pytest.raises(ValueError):
        synthesize_bursty_arrivals(10.0, 0.0, 20, 0.005, seed="x")
    with pytest.raises(ValueError):
        # offered load must stay below the intra-burst plateau
        synthesize_bursty_arrivals(10.0, 0.95, 20, 0.005, seed="x",
                                   intra_burst_utilization=0.9)
