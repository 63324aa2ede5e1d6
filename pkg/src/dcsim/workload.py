"""Job and task generation: arrival processes, traces, DAG templates.

Jobs are DAGs of tasks. A task carries a work size (its service time on
a nominal-speed core); a DAG edge carries a byte count that must move
between servers before the child may start. Single-task jobs are the
degenerate one-node DAG.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from .engine import RngStream, SimTime, seconds_to_us

# Task lifecycle states.
BLOCKED = "blocked"      # waiting on parents or inbound transfers
READY = "ready"          # dependencies satisfied, not yet dispatched
QUEUED = "queued"        # sitting in a queue on some server
RUNNING = "running"
DONE = "done"


def utilization_to_arrival_rate(rho: float, mu: float, n_servers: int,
                                n_cores: int) -> float:
    """Fleet arrival rate (jobs/s) that loads n_servers x n_cores cores
    to fraction rho when each job needs 1/mu seconds of core time."""
    if rho < 0:
        raise ValueError(f"utilization must be non-negative: {rho}")
    if mu <= 0 or n_servers <= 0 or n_cores <= 0:
        raise ValueError("mu, n_servers, n_cores must be positive")
    return rho * mu * n_servers * n_cores


def poisson_interarrival(rng: RngStream, rate_per_s: float) -> float:
    """One exponential interarrival gap in seconds, by inverse CDF.

    Uses -ln(1-u)/rate with u uniform in [0,1): u near 0 gives gaps
    near 0, u near 1 gives long gaps.
    """
    if rate_per_s <= 0:
        raise ValueError(f"arrival rate must be positive: {rate_per_s}")
    return rng.exponential(1.0 / rate_per_s)


@dataclass
class MmppState:
    """Two-phase Markov-modulated Poisson process.

    The modulating chain has a high-rate and a low-rate phase. Arrival
    rate in the current phase and the phase-switch rate compete as
    exponentials; arrivals are emitted only when the arrival clock wins.
    """
    rate_high_per_s: float
    rate_low_per_s: float
    switch_high_to_low_per_s: float
    switch_low_to_high_per_s: float
    phase: str = "high"

    def __post_init__(self) -> None:
        for name in ("rate_high_per_s", "rate_low_per_s",
                     "switch_high_to_low_per_s", "switch_low_to_high_per_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.phase not in ("high", "low"):
            raise ValueError(f"unknown MMPP phase: {self.phase}")

    def stationary_high_fraction(self) -> float:
        """Long-run fraction of time in the high phase."""
        hl = self.switch_high_to_low_per_s
        lh = self.switch_low_to_high_per_s
        return lh / (lh + hl)

    def long_run_rate_per_s(self) -> float:
        pi_h = self.stationary_high_fraction()
        return pi_h * self.rate_high_per_s + (1 - pi_h) * self.rate_low_per_s

    def burstiness_ratio(self) -> float:
        return self.rate_high_per_s / self.rate_low_per_s

    def next_arrival(self, rng: RngStream) -> float:
        """Advance to the next arrival. Returns the elapsed seconds,
        accumulating over any phase switches that happen first."""
        elapsed = 0.0
        while True:
            if self.phase == "high":
                arr_rate = self.rate_high_per_s
                sw_rate = self.switch_high_to_low_per_s
                other = "low"
            else:
                arr_rate = self.rate_low_per_s
                sw_rate = self.switch_low_to_high_per_s
                other = "high"
            t_arrival = rng.exponential(1.0 / arr_rate)
            t_switch = rng.exponential(1.0 / sw_rate)
            if t_arrival <= t_switch:
                return elapsed + t_arrival
            elapsed += t_switch
            self.phase = other


_TRACE_UNITS = {"s": 1_000_000.0, "ms": 1_000.0, "us": 1.0}


@dataclass
class ArrivalTrace:
    """Absolute arrival timestamps in microseconds, sorted ascending."""
    timestamps_us: list[int]
    sort_warnings: int = 0

    def __len__(self) -> int:
        return len(self.timestamps_us)


def load_trace(stream: TextIO, unit: str = "s") -> ArrivalTrace:
    """Parse a one-timestamp-per-line trace.

    Blank lines and lines starting with '#' are skipped. A malformed
    line is a hard error naming the line number. Out-of-order input is
    tolerated: entries are sorted and each inversion observed during the
    scan is counted as a warning.
    """
    if unit not in _TRACE_UNITS:
        raise ValueError(f"unknown trace unit {unit!r}; expected s|ms|us")
    scale = _TRACE_UNITS[unit]
    stamps: list[int] = []
    warnings = 0
    prev = None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            value = float(line)
        except ValueError:
            raise ValueError(f"trace line {lineno}: not a timestamp: {line!r}")
        if value < 0:
            raise ValueError(f"trace line {lineno}: negative timestamp {value}")
        us = int(round(value * scale))
        if prev is not None and us < prev:
            warnings += 1
        prev = us
        stamps.append(us)
    stamps.sort()
    return ArrivalTrace(stamps, warnings)


def synthesize_bursty_arrivals(duration_s: float, utilization: float,
                               n_cores: int, mean_service_s: float,
                               seed, cycle_s: float = 8.0,
                               intra_burst_utilization: float = 0.9,
                               ramp_s: float = 0.6,
                               echo_jobs: int = 20,
                               echo_lag_median_s: float = 0.18,
                               echo_lag_sigma: float = 0.3,
                               lull_sigma: float = 0.3) -> list[float]:
    """Two-timescale arrival synthesis: bursts, echoes, lulls.

    Interactive fleets alternate between busy spells and quiet spells,
    and a dying burst is usually followed by a straggler clump shortly
    after. Sleep-management studies need all three features: the burst
    sets the plateau load, the lull is the sleep opportunity, and the
    echo punishes timers short enough to fire before the coast is clear.

    Each cycle is: a burst whose arrival rate ramps linearly to a fixed
    plateau (the ramp wakes servers one by one instead of slamming a
    sleeping fleet with a backlog), then an echo clump of echo_jobs
    arrivals ~20 ms wide at a lognormal lag after the burst ends, then a
    lognormal lull. Offered utilization scales only the burst length;
    plateau rate, echo lag, and lull shape stay load-invariant, so gap
    structure seen by any one server does not move with load.

    Returns sorted absolute timestamps in seconds over [0, duration_s).
    """
    if not 0 < utilization < intra_burst_utilization:
        raise ValueError(
            f"utilization must sit in (0, {intra_burst_utilization})")
    plateau_rate = intra_burst_utilization * n_cores / mean_service_s
    jobs_per_cycle = utilization * cycle_s * n_cores / mean_service_s
    ramp_jobs = plateau_rate * ramp_s / 2
    flat_s = (jobs_per_cycle - ramp_jobs) / plateau_rate
    if flat_s <= 0:
        raise ValueError("cycle too short for the requested utilization")
    burst_s = ramp_s + flat_s
    lull_median = cycle_s - burst_s - echo_lag_median_s
    if lull_median <= 0:
        raise ValueError("cycle leaves no room for a lull; raise cycle_s")
    rng = random.Random(f"trace/{seed}")
    stamps: list[float] = []
    t = 0.0
    while t < duration_s:
        start = t
        while t - start < ramp_s:
            t += rng.expovariate(plateau_rate)
            # thinning: acceptance probability tracks the ramp
            if rng.random() < (t - start) / ramp_s and t < duration_s:
                stamps.append(t)
        end = start + burst_s
        while True:
            t += rng.expovariate(plateau_rate)
            if t >= min(end, duration_s):
                break
            stamps.append(t)
        echo_at = end + rng.lognormvariate(
            math.log(echo_lag_median_s), echo_lag_sigma)
        for _ in range(echo_jobs):
            s = echo_at + rng.random() * 0.02
            if s < duration_s:
                stamps.append(s)
        t = end + rng.lognormvariate(math.log(lull_median), lull_sigma)
    stamps.sort()
    return stamps


def write_trace(path, timestamps_s: Iterable[float]) -> None:
    """Write timestamps as a unit-seconds trace file."""
    with open(path, "w") as fh:
        for s in timestamps_s:
            fh.write(f"{s:.6f}\n")


# --- size distributions -------------------------------------------------

@dataclass(frozen=True)
class SizeDistribution:
    """Task work-size distribution. kind: constant | uniform | exponential.
    Parameters are in seconds of core time at nominal frequency."""
    kind: str
    value_s: float = 0.0       # constant
    low_s: float = 0.0         # uniform
    high_s: float = 0.0
    mean_s: float = 0.0        # exponential

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.value_s <= 0:
                raise ValueError("constant size must be positive")
        elif self.kind == "uniform":
            if not 0 < self.low_s <= self.high_s:
                raise ValueError("uniform size needs 0 < low <= high")
        elif self.kind == "exponential":
            if self.mean_s <= 0:
                raise ValueError("exponential size mean must be positive")
        else:
            raise ValueError(f"unknown size distribution: {self.kind}")

    def mean(self) -> float:
        if self.kind == "constant":
            return self.value_s
        if self.kind == "uniform":
            return (self.low_s + self.high_s) / 2.0
        return self.mean_s

    def sample_us(self, rng: RngStream) -> int:
        if self.kind == "constant":
            s = self.value_s
        elif self.kind == "uniform":
            s = rng.uniform(self.low_s, self.high_s)
        else:
            s = rng.exponential(self.mean_s)
        us = seconds_to_us(s)
        return max(us, 1)  # a task always costs at least one tick


@dataclass(frozen=True)
class TaskTemplate:
    name: str
    task_type: str
    size: SizeDistribution


@dataclass(frozen=True)
class EdgeTemplate:
    src: str
    dst: str
    transfer_bytes: int

    def __post_init__(self) -> None:
        if self.transfer_bytes < 0:
            raise ValueError("edge transfer size must be >= 0")


@dataclass(frozen=True)
class JobTemplate:
    """Validated DAG shape shared by all jobs it instantiates."""
    tasks: tuple[TaskTemplate, ...]
    edges: tuple[EdgeTemplate, ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("duplicate task names in template")
        index = set(names)
        for e in self.edges:
            if e.src not in index or e.dst not in index:
                raise ValueError(f"edge references unknown task: {e.src}->{e.dst}")
            if e.src == e.dst:
                raise ValueError(f"self edge on task {e.src}")
        if len({(e.src, e.dst) for e in self.edges}) != len(self.edges):
            raise ValueError("duplicate edge in template")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        # Kahn's algorithm; leftovers mean a cycle.
        children: dict[str, list[str]] = {t.name: [] for t in self.tasks}
        indeg = {t.name: 0 for t in self.tasks}
        for e in self.edges:
            children[e.src].append(e.dst)
            indeg[e.dst] += 1
        frontier = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while frontier:
            n = frontier.pop()
            seen += 1
            for c in children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    frontier.append(c)
        if seen != len(self.tasks):
            raise ValueError("job template DAG has a cycle")

    def mean_total_work_s(self) -> float:
        return sum(t.size.mean() for t in self.tasks)

    def task_types(self) -> set[str]:
        return {t.task_type for t in self.tasks}


class Task:
    """One runnable unit of a job."""

    __slots__ = ("job", "index", "name", "task_type", "size_us", "state",
                 "assigned_server", "remaining_parents", "pending_transfers",
                 "children", "start_us", "finish_us")

    def __init__(self, job: "Job", index: int, name: str, task_type: str,
                 size_us: int):
        self.job = job
        self.index = index
        self.name = name
        self.task_type = task_type
        self.size_us = size_us
        self.state = BLOCKED
        self.assigned_server: Optional[int] = None
        self.remaining_parents = 0
        self.pending_transfers = 0
        # (child_task, transfer_bytes) pairs
        self.children: list[tuple["Task", int]] = []
        self.start_us: Optional[SimTime] = None
        self.finish_us: Optional[SimTime] = None

    def __repr__(self) -> str:
        return f"<Task {self.job.job_id}/{self.name} {self.state}>"


class Job:
    """An instantiated DAG with sampled task sizes."""

    __slots__ = ("job_id", "arrival_us", "tasks", "done_count", "completion_us")

    def __init__(self, job_id: int, arrival_us: SimTime):
        self.job_id = job_id
        self.arrival_us = arrival_us
        self.tasks: list[Task] = []
        self.done_count = 0
        self.completion_us: Optional[SimTime] = None

    def root_tasks(self) -> list[Task]:
        return [t for t in self.tasks if t.remaining_parents == 0]

    def is_complete(self) -> bool:
        return self.done_count == len(self.tasks)

    def sojourn_us(self) -> int:
        if self.completion_us is None:
            raise ValueError(f"job {self.job_id} not complete")
        return self.completion_us - self.arrival_us


def instantiate_job(template: JobTemplate, rng: RngStream, job_id: int,
                    arrival_us: SimTime) -> Job:
    """Sample task sizes and wire parent/child links for one job."""
    job = Job(job_id, arrival_us)
    by_name: dict[str, Task] = {}
    for i, tt in enumerate(template.tasks):
        task = Task(job, i, tt.name, tt.task_type, tt.size.sample_us(rng))
        job.tasks.append(task)
        by_name[tt.name] = task
    for e in template.edges:
        parent = by_name[e.src]
        child = by_name[e.dst]
        parent.children.append((child, e.transfer_bytes))
        child.remaining_parents += 1
    for t in job.tasks:
        if t.remaining_parents == 0:
            t.state = READY
    return job


def critical_path_us(job: Job) -> int:
    """Longest task-size path through the job DAG, ignoring transfers.
    A lower bound on the job's sojourn at nominal core frequency."""
    memo: dict[int, int] = {}

    def longest_from(task: Task) -> int:
        got = memo.get(task.index)
        if got is not None:
            return got
        best = 0
        for child, _ in task.children:
            best = max(best, longest_from(child))
        memo[task.index] = task.size_us + best
        return memo[task.index]

    return max(longest_from(t) for t in job.tasks)
