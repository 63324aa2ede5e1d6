"""Measurement plumbing: state residencies, latencies, energy, time series.

Residency is the source of truth for energy. Each powered component
(core, package, server platform, switch port, line card, chassis) owns
a ledger that maps state label -> accumulated microseconds. Because the
clock is integral and every transition stamps the ledger, residencies
sum exactly to elapsed time, and energy is a pure post-hoc reduction:
sum over (state power x residency).
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

from .engine import SimTime, us_to_seconds


class ResidencyLedger:
    """Per-component state residency accumulator.

    States are plain string labels. A component mid-transition carries
    the pseudo-state label "t:a>b" stamped by its owner; what power a
    label draws is the owner's concern (see EnergyAccount).
    """

    __slots__ = ("component", "state", "stamp", "durations")

    def __init__(self, component: str, initial_state: str, now: SimTime = 0):
        self.component = component
        self.state = initial_state
        self.stamp = now
        self.durations: dict[str, int] = {}

    def on_transition(self, new_state: str, now: SimTime) -> None:
        """Close the residency interval for the current state and enter
        new_state. now must not precede the last stamp."""
        if now < self.stamp:
            raise ValueError(
                f"{self.component}: transition at {now} before stamp {self.stamp}")
        d = self.durations
        cur = self.state
        d[cur] = d.get(cur, 0) + (now - self.stamp)
        self.state = new_state
        self.stamp = now

    def finalize(self, now: SimTime) -> None:
        """Flush the open interval so residencies cover [0, now]."""
        self.on_transition(self.state, now)

    def total_us(self) -> int:
        return sum(self.durations.values())

    def residency_us(self, state: str) -> int:
        return self.durations.get(state, 0)


def transition_label(from_state: str, to_state: str) -> str:
    """Ledger label for a component mid-transition."""
    return f"t:{from_state}>{to_state}"


def split_transition_label(label: str) -> Optional[tuple[str, str]]:
    if not label.startswith("t:"):
        return None
    a, _, b = label[2:].partition(">")
    return a, b


class EnergyAccount:
    """Reduces ledgers to joules.

    Registration binds a ledger to a power resolver: a callable mapping
    a state label to watts. Resolvers must cover every label observed;
    a missing state is a hard error rather than silently zero energy.
    Components register under a group ("server" or "network") so the
    report can subtotal. The fleet total is computed as the sum of the
    group subtotals, which makes the additivity check exact.
    """

    def __init__(self) -> None:
        self._entries: list[tuple[str, ResidencyLedger, Callable[[str], float]]] = []

    def register(self, group: str, ledger: ResidencyLedger,
                 power_of: Callable[[str], float]) -> None:
        if group not in ("server", "network"):
            raise ValueError(f"unknown energy group: {group}")
        self._entries.append((group, ledger, power_of))

    def finalize(self, now: SimTime) -> None:
        for _, ledger, _ in self._entries:
            ledger.finalize(now)

    def component_energy_j(self, ledger: ResidencyLedger,
                           power_of: Callable[[str], float]) -> float:
        total = 0.0
        for state, dur_us in ledger.durations.items():
            watts = power_of(state)
            if watts is None:
                raise KeyError(
                    f"{ledger.component}: no power defined for state {state!r}")
            total += watts * us_to_seconds(dur_us)
        return total

    def group_energy_j(self, group: str) -> float:
        total = 0.0
        for g, ledger, power_of in self._entries:
            if g == group:
                total += self.component_energy_j(ledger, power_of)
        return total

    def total_energy_j(self) -> float:
        return self.group_energy_j("server") + self.group_energy_j("network")

    def ledgers(self, group: Optional[str] = None) -> list[ResidencyLedger]:
        return [l for g, l, _ in self._entries if group is None or g == group]


class LatencyRecorder:
    """Collects per-job sojourn times in microseconds."""

    __slots__ = ("samples",)

    def __init__(self) -> None:
        self.samples: list[int] = []

    def record(self, sojourn_us: int) -> None:
        if sojourn_us < 0:
            raise ValueError(f"negative sojourn: {sojourn_us}")
        self.samples.append(sojourn_us)

    def count(self) -> int:
        return len(self.samples)

    def mean_us(self) -> float:
        if not self.samples:
            raise ValueError("empty latency recorder")
        return sum(self.samples) / len(self.samples)

    def max_us(self) -> int:
        if not self.samples:
            raise ValueError("empty latency recorder")
        return max(self.samples)

    def percentile_us(self, p: float) -> int:
        return percentile(self.samples, p)


def percentile(samples: Iterable[float], p: float):
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample
    (1-based). p in (0, 1]. Empty input is an error."""
    import math
    data = sorted(samples)
    if not data:
        raise ValueError("percentile of empty sample set")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"percentile fraction out of range: {p}")
    rank = math.ceil(p * len(data))
    return data[rank - 1]


class TimeSeries:
    """Fixed-interval sampled channels.

    Channels are pinned: time_s, active_servers, pending_jobs,
    fleet_power_w, awake_switches. The sampler object is called at each
    tick and must return the four values in that order.
    """

    COLUMNS = ("time_s", "active_servers", "pending_jobs",
               "fleet_power_w", "awake_switches")

    def __init__(self, interval_us: int):
        if interval_us <= 0:
            raise ValueError("sampling interval must be positive")
        self.interval_us = interval_us
        self.rows: list[tuple[float, int, int, float, int]] = []

    def sample(self, now: SimTime, active_servers: int, pending_jobs: int,
               fleet_power_w: float, awake_switches: int) -> None:
        t = us_to_seconds(now)
        if self.rows and t <= self.rows[-1][0]:
            raise ValueError(f"non-increasing sample time {t}")
        self.rows.append((t, active_servers, pending_jobs,
                          fleet_power_w, awake_switches))


def fmt(value) -> str:
    """Fixed-format a summary/time-series value: floats at 6 decimals,
    everything else as str. Keeps emitted files byte-reproducible."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_summary_csv(path: str, rows: list[tuple[str, object]]) -> None:
    """key,value pairs in the given fixed order."""
    with open(path, "w", newline="") as f:
        f.write("key,value\n")
        for key, value in rows:
            f.write(f"{key},{fmt(value)}\n")


def write_timeseries_csv(path: str, series: TimeSeries) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(TimeSeries.COLUMNS) + "\n")
        for t, active, pending, power, awake in series.rows:
            f.write(f"{fmt(t)},{active},{pending},{fmt(power)},{awake}\n")
