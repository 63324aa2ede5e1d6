"""Deterministic discrete-event simulation kernel.

The clock is an integer count of microseconds. Events fire in
(fire_at, seq) order where seq is a monotone counter assigned at
scheduling time, so two runs that schedule the same events in the same
order dispatch them identically. There is no wall-clock coupling and no
threading; determinism is a property of the data structures alone.
"""

from __future__ import annotations

import heapq
import random
from typing import Any, Callable, Optional

SimTime = int  # microseconds

US_PER_S = 1_000_000


def seconds_to_us(seconds: float) -> SimTime:
    """Convert a non-negative duration in seconds to whole microseconds."""
    if seconds < 0:
        raise ValueError(f"negative duration: {seconds}")
    return int(round(seconds * US_PER_S))


def us_to_seconds(us: SimTime) -> float:
    return us / US_PER_S


class CausalityError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


# Event kind labels. Kinds are advisory: the kernel orders purely by
# (fire_at, seq), but every event carries its kind so audit hooks and
# traces can classify dispatches.
JOB_ARRIVAL = "JobArrival"
TASK_START = "TaskStart"
TASK_COMPLETE = "TaskComplete"
FLOW_COMPLETE = "FlowComplete"
PACKET_HOP = "PacketHop"
TIMER_EXPIRY = "TimerExpiry"
STATE_TRANSITION_COMPLETE = "StateTransitionComplete"
CONTROLLER_TICK = "ControllerTick"
PORT_IDLE_CHECK = "PortIdleCheck"

EVENT_KINDS = frozenset({
    JOB_ARRIVAL, TASK_START, TASK_COMPLETE, FLOW_COMPLETE, PACKET_HOP,
    TIMER_EXPIRY, STATE_TRANSITION_COMPLETE, CONTROLLER_TICK,
    PORT_IDLE_CHECK,
})


class Event:
    """A scheduled callback. Returned by Simulator.schedule as the
    cancellation handle."""

    __slots__ = ("fire_at", "seq", "kind", "fn", "args", "cancelled")

    def __init__(self, fire_at: SimTime, seq: int, kind: str,
                 fn: Callable[..., Any], args: tuple):
        self.fire_at = fire_at
        self.seq = seq
        self.kind = kind
        self.fn = fn
        self.args = args
        self.cancelled = False

    def __lt__(self, other: "Event") -> bool:
        # heapq ordering: time first, then scheduling order.
        if self.fire_at != other.fire_at:
            return self.fire_at < other.fire_at
        return self.seq < other.seq

    def __repr__(self) -> str:
        state = " cancelled" if self.cancelled else ""
        return f"<Event {self.kind}@{self.fire_at} seq={self.seq}{state}>"


class Simulator:
    """Event queue plus clock.

    schedule() never reorders equal-time events relative to their
    scheduling order, and cancel() is O(1) (lazy removal: cancelled
    events are skipped at pop time and never dispatched).
    """

    def __init__(self) -> None:
        self.now: SimTime = 0
        self._heap: list[Event] = []
        self._seq = 0
        self.dispatched = 0
        # Optional audit hook: called with each event just before its
        # callback runs. Left None on hot paths.
        self.on_dispatch: Optional[Callable[[Event], None]] = None

    def schedule(self, fire_at: SimTime, kind: str,
                 fn: Callable[..., Any], *args: Any) -> Event:
        """Queue fn(*args) to run at fire_at. Returns a handle usable
        with cancel(). Scheduling into the past is a hard error."""
        if fire_at < self.now:
            raise CausalityError(
                f"cannot schedule {kind} at {fire_at}; clock is {self.now}")
        ev = Event(fire_at, self._seq, kind, fn, args)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay: SimTime, kind: str,
                    fn: Callable[..., Any], *args: Any) -> Event:
        return self.schedule(self.now + delay, kind, fn, *args)

    def cancel(self, ev: Event) -> bool:
        """Cancel a pending event. True if this call removed it, False
        if it already fired or was already cancelled. Cancelling one
        event never perturbs the order of the others."""
        if ev.cancelled or ev.fire_at < self.now or ev.args is None:
            return False
        ev.cancelled = True
        return True

    # args is set to None once dispatched so a stale handle (same-time
    # already-fired event) cannot be "cancelled" after the fact.

    def step(self) -> bool:
        """Dispatch the single next pending event. False if queue empty."""
        heap = self._heap
        while heap:
            ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            fn, args = ev.fn, ev.args
            ev.args = None
            self.dispatched += 1
            if self.on_dispatch is not None:
                self.on_dispatch(ev)
            fn(*args)
            return True
        return False

    def peek_time(self) -> Optional[SimTime]:
        heap = self._heap
        while heap and heap[0].cancelled:
            heapq.heappop(heap)
        return heap[0].fire_at if heap else None

    def run_until(self, t_end: SimTime) -> int:
        """Dispatch every event with fire_at <= t_end in order, then set
        the clock to t_end. Returns the number of events dispatched by
        this call (cancelled events are not counted)."""
        if t_end < self.now:
            raise CausalityError(f"run_until({t_end}) behind clock {self.now}")
        count = 0
        heap = self._heap
        while heap and heap[0].fire_at <= t_end:
            ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            fn, args = ev.fn, ev.args
            ev.args = None
            self.dispatched += 1
            count += 1
            if self.on_dispatch is not None:
                self.on_dispatch(ev)
            fn(*args)
        self.now = t_end
        return count

    def run(self, max_events: Optional[int] = None) -> int:
        """Dispatch until the queue is empty (or max_events reached)."""
        count = 0
        while self.step():
            count += 1
            if max_events is not None and count >= max_events:
                break
        return count

    def pending_count(self) -> int:
        return sum(1 for ev in self._heap if not ev.cancelled)


class RngStream:
    """Named deterministic random stream.

    Streams are derived from (seed, stream_id); distinct ids give
    unrelated sequences, and the same (seed, stream_id, draw index)
    always yields the same value. Built on random.Random seeded with
    the key string, which CPython hashes with SHA-512, so values are
    stable across processes and platforms.
    """

    __slots__ = ("seed", "stream_id", "_rng")

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        self._rng = random.Random(f"{seed}/{stream_id}")

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return self._rng.random()

    def uniform(self, low: float, high: float) -> float:
        return self._rng.uniform(low, high)

    def randint(self, low: int, high: int) -> int:
        return self._rng.randint(low, high)

    def exponential(self, mean: float) -> float:
        """Exponential draw via inverse CDF: -mean*ln(1-u).

        Convention: u near 0 gives durations near 0, u near 1 gives
        large durations. random() never returns 1.0 so the log argument
        stays positive.
        """
        import math
        if mean <= 0:
            raise ValueError(f"exponential mean must be positive: {mean}")
        return -mean * math.log(1.0 - self._rng.random())

    def shuffle(self, items: list) -> None:
        self._rng.shuffle(items)
