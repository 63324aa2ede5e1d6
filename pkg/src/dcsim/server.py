"""Multi-core server model: power-state hierarchy, queues, service timing.

A server is platform + packages + cores, each level with its own power
states and transition latencies:

    core:     c0_active | c0_idle | c1 | c3 | c6
    package:  pkg_c0 | pkg_c6        (pkg_c6 needs every core in c6)
    platform: s0 | s3 | s_off        (s3 needs every package in pkg_c6
                                      and empty queues)

Power is additive: sum of per-core draw, per-package uncore draw, and
platform draw. A component mid-transition draws max(from, to). While
the platform sits in s3/s_off, cores and packages are powered down and
contribute zero; their ledgers carry the label "off" for that interval.

Task service time is size/frequency_scale rounded up to a whole
microsecond. Queue modes: "unified" (one server-level FIFO feeding all
cores) or "per_core" (a FIFO per core, no work stealing). Sleeping is
policy-driven via sleep targets; waking is demand-driven: queued work
wakes exactly as many cores (and their enclosing package/platform) as
it needs, lowest ids first.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import (STATE_TRANSITION_COMPLETE, TASK_COMPLETE, SimTime,
                     Simulator)
from .stats import ResidencyLedger, split_transition_label, transition_label
from .workload import DONE, QUEUED, RUNNING, Task

# Core power states.
C0_ACTIVE = "c0_active"
C0_IDLE = "c0_idle"
C1 = "c1"
C3 = "c3"
C6 = "c6"
CORE_SLEEP_STATES = (C1, C3, C6)
CORE_STATES = (C0_ACTIVE, C0_IDLE) + CORE_SLEEP_STATES

# Package power states.
PKG_C0 = "pkg_c0"
PKG_C6 = "pkg_c6"

# Platform (system) power states.
S0 = "s0"
S3 = "s3"
S_OFF = "s_off"

# Ledger label for a component cut off because the platform left s0.
OFF = "off"

UNIFIED = "unified"
PER_CORE = "per_core"

# Server-level composite states, observational only (no power attached).
SRV_ACTIVE = "active"        # s0 with at least one package awake
SRV_PKG_SLEEP = "pkg_sleep"  # s0, every package asleep
SRV_S3 = "s3"
SRV_OFF = "s_off"
SRV_TRANSITION = "transition"


class TransitionInProgressError(RuntimeError):
    """A component was asked to transition while already mid-transition."""


class IllegalTransitionError(RuntimeError):
    """A transition violating the state hierarchy was requested."""


@dataclass(frozen=True)
class ServerPowerProfile:
    """Static power/latency numbers for one server model.

    Powers are watts; latencies are microseconds. Deeper states must not
    draw more than shallower ones, and waking out of any sleep state
    takes strictly positive time.
    """
    core_power_w: dict[str, float]
    package_power_w: dict[str, float]
    platform_power_w: dict[str, float]
    core_sleep_latency_us: dict[str, int]   # c0_idle -> that state
    core_wake_latency_us: dict[str, int]    # that state -> c0_idle
    package_sleep_latency_us: int
    package_wake_latency_us: int
    platform_sleep_latency_us: int          # s0 -> s3
    platform_wake_latency_us: int           # s3 -> s0
    # Explicit draw while the platform suspends or resumes. None falls back
    # to max(from, to). Suspend/resume rails typically pull more than idle,
    # so profiles that care about wasted sleep cycles should set this.
    platform_transition_w: Optional[float] = None

    def __post_init__(self) -> None:
        for state in CORE_STATES:
            if state not in self.core_power_w:
                raise ValueError(f"core power missing state {state}")
        for state in (PKG_C0, PKG_C6):
            if state not in self.package_power_w:
                raise ValueError(f"package power missing state {state}")
        for state in (S0, S3):
            if state not in self.platform_power_w:
                raise ValueError(f"platform power missing state {state}")
        self.platform_power_w.setdefault(S_OFF, 0.0)
        cw = self.core_power_w
        order = [cw[C0_ACTIVE], cw[C0_IDLE], cw[C1], cw[C3], cw[C6]]
        if any(a < b for a, b in zip(order, order[1:])) or order[-1] < 0:
            raise ValueError("core powers must be non-increasing with depth")
        pw = self.package_power_w
        if not pw[PKG_C0] >= pw[PKG_C6] >= 0:
            raise ValueError("package powers must be non-increasing with depth")
        fw = self.platform_power_w
        if not fw[S0] >= fw[S3] >= fw[S_OFF] >= 0:
            raise ValueError("platform powers must be non-increasing with depth")
        for state in CORE_SLEEP_STATES:
            if self.core_sleep_latency_us.get(state, 0) < 0:
                raise ValueError("negative core sleep latency")
            if self.core_wake_latency_us.get(state, 0) <= 0:
                raise ValueError(f"core wake latency from {state} must be > 0")
        if self.package_wake_latency_us <= 0 or self.platform_wake_latency_us <= 0:
            raise ValueError("package/platform wake latencies must be > 0")
        if self.package_sleep_latency_us < 0 or self.platform_sleep_latency_us < 0:
            raise ValueError("negative sleep latency")
        if self.platform_transition_w is not None and self.platform_transition_w < 0:
            raise ValueError("platform transition power must be >= 0")

    def _resolve(self, table: dict[str, float], label: str) -> float:
        if label == OFF:
            return 0.0
        pair = split_transition_label(label)
        if pair is not None:
            return max(self._resolve(table, pair[0]),
                       self._resolve(table, pair[1]))
        if label not in table:
            raise KeyError(f"no power defined for state {label!r}")
        return table[label]

    def core_power_of(self, label: str) -> float:
        return self._resolve(self.core_power_w, label)

    def package_power_of(self, label: str) -> float:
        return self._resolve(self.package_power_w, label)

    def platform_power_of(self, label: str) -> float:
        if self.platform_transition_w is not None and label != OFF:
            if split_transition_label(label) is not None:
                return self.platform_transition_w
        return self._resolve(self.platform_power_w, label)


def task_service_duration_us(size_us: int, frequency_scale: float) -> int:
    """Whole-microsecond service time of a task on a scaled core."""
    if frequency_scale <= 0:
        raise ValueError(f"frequency scale must be positive: {frequency_scale}")
    return max(1, math.ceil(size_us / frequency_scale))


@dataclass(frozen=True)
class Placement:
    """Outcome of handing a task to a server."""
    kind: str                 # started | queued_local | queued_on_core | rejected
    core_id: Optional[int] = None


class _Component:
    """Shared transition bookkeeping for cores, packages, platform."""

    __slots__ = ("state", "transitioning_to", "wake_after", "ledger")

    def __init__(self, ledger: ResidencyLedger, state: str):
        self.state = state
        self.transitioning_to: Optional[str] = None
        self.wake_after = False
        self.ledger = ledger

    @property
    def in_transition(self) -> bool:
        return self.transitioning_to is not None


class Core(_Component):
    __slots__ = ("core_id", "frequency_scale", "task", "queue")

    def __init__(self, core_id: int, frequency_scale: float,
                 ledger: ResidencyLedger, queue: Optional[deque]):
        super().__init__(ledger, C0_IDLE)
        self.core_id = core_id
        self.frequency_scale = frequency_scale
        self.task: Optional[Task] = None
        self.queue = queue  # per-core mode only

    def queue_len(self) -> int:
        return len(self.queue) if self.queue is not None else 0


class Package(_Component):
    __slots__ = ("package_id", "cores")

    def __init__(self, package_id: int, cores: list[Core],
                 ledger: ResidencyLedger):
        super().__init__(ledger, PKG_C0)
        self.package_id = package_id
        self.cores = cores


class Server:
    """One server: queues, cores, and the sleep/wake machinery.

    The scheduler installs on_task_done (called with the finished task)
    and optionally pull_remote (asked for a task when local queues run
    dry, used by the global-queue mode). A power policy installs
    on_idle (server just ran out of work). Sleeping is initiated via
    set_sleep_target; waking happens automatically when work is queued.
    """

    def __init__(self, server_id: int, sim: Simulator,
                 profile: ServerPowerProfile, n_packages: int,
                 cores_per_package: int, frequency_scale: float = 1.0,
                 queue_mode: str = UNIFIED,
                 served_task_types: Optional[frozenset[str]] = None):
        if queue_mode not in (UNIFIED, PER_CORE):
            raise ValueError(f"unknown queue mode: {queue_mode}")
        if n_packages < 1 or cores_per_package < 1:
            raise ValueError("server needs at least one package and core")
        self.server_id = server_id
        self.sim = sim
        self.profile = profile
        self.queue_mode = queue_mode
        self.served_task_types = served_task_types  # None means serve anything
        self.platform = _Component(
            ResidencyLedger(f"server{server_id}/platform", S0), S0)
        self.packages: list[Package] = []
        self.cores: list[Core] = []
        cid = 0
        for pid in range(n_packages):
            cores = []
            for _ in range(cores_per_package):
                q = deque() if queue_mode == PER_CORE else None
                core = Core(cid, frequency_scale,
                            ResidencyLedger(f"server{server_id}/core{cid}", C0_IDLE), q)
                cores.append(core)
                self.cores.append(core)
                cid += 1
            self.packages.append(Package(
                pid, cores, ResidencyLedger(f"server{server_id}/pkg{pid}", PKG_C0)))
        self.queue: deque[Task] = deque()  # unified mode
        self.pending_tasks = 0  # enqueued on this server, not yet done
        self.sleep_target: Optional[str] = None  # PKG_C6 or S3
        self.state_ledger = ResidencyLedger(f"server{server_id}", SRV_ACTIVE)
        # callbacks wired by scheduler / policy
        self.on_task_done: Optional[Callable[["Server", Task], None]] = None
        self.pull_remote: Optional[Callable[["Server"], Optional[Task]]] = None
        self.on_idle: Optional[Callable[["Server"], None]] = None

    # -- queries ----------------------------------------------------------

    @property
    def n_cores(self) -> int:
        return len(self.cores)

    @property
    def is_awake(self) -> bool:
        return self.platform.state == S0 and not self.platform.in_transition

    @property
    def is_asleep(self) -> bool:
        """Platform in (or entering) a system sleep state."""
        return not (self.platform.state == S0 and not self.platform.in_transition)

    def has_free_core(self) -> bool:
        """Capacity view: fewer live tasks than cores. Sleeping cores
        count as capacity because queued work wakes them."""
        return self.pending_tasks < self.n_cores

    def serves(self, task_type: str) -> bool:
        return self.served_task_types is None or task_type in self.served_task_types

    def queued_count(self) -> int:
        if self.queue_mode == UNIFIED:
            return len(self.queue)
        return sum(len(c.queue) for c in self.cores)

    def power_w(self) -> float:
        """Instantaneous additive draw, from current ledger labels."""
        p = self.profile
        total = p.platform_power_of(self.platform.ledger.state)
        for pkg in self.packages:
            total += p.package_power_of(pkg.ledger.state)
        for core in self.cores:
            total += p.core_power_of(core.ledger.state)
        return total

    # -- task intake --------------------------------------------------------

    def enqueue_task(self, task: Task, now: SimTime) -> Placement:
        """Accept a task. Starts it immediately when an idle core is
        available; otherwise queues it and initiates whatever wake-up
        chain is needed for it to run."""
        if not self.serves(task.task_type):
            return Placement("rejected")
        self.pending_tasks += 1
        task.state = QUEUED
        self.sleep_target = None
        if self.queue_mode == PER_CORE:
            core = self._pick_core_for_queue()
            pkg = self._package_of(core)
            if (self.is_awake and core.state == C0_IDLE
                    and not core.in_transition and core.task is None
                    and pkg.state == PKG_C0 and not pkg.in_transition):
                self._start_task(core, task, now)
                return Placement("started", core.core_id)
            core.queue.append(task)
            self._kick(now)
            return Placement("queued_on_core", core.core_id)
        # unified
        if self.is_awake:
            core = self._idle_core()
            if core is not None:
                self._start_task(core, task, now)
                return Placement("started", core.core_id)
        self.queue.append(task)
        self._kick(now)
        return Placement("queued_local")

    def _pick_core_for_queue(self) -> Core:
        # shortest queue, lowest core id on ties; no stealing later
        return min(self.cores, key=lambda c: (c.queue_len(), c.core_id))

    def _idle_core(self) -> Optional[Core]:
        for pkg in self.packages:
            if pkg.state != PKG_C0 or pkg.in_transition:
                continue
            for core in pkg.cores:
                if core.state == C0_IDLE and not core.in_transition and core.task is None:
                    return core
        return None

    # -- execution ----------------------------------------------------------

    def _start_task(self, core: Core, task: Task, now: SimTime) -> None:
        core.task = task
        self._set_core_state(core, C0_ACTIVE, now)
        task.state = RUNNING
        task.start_us = now
        duration = task_service_duration_us(task.size_us, core.frequency_scale)
        self.sim.schedule(now + duration, TASK_COMPLETE,
                          self._finish_task, core, task)

    def _finish_task(self, core: Core, task: Task) -> None:
        now = self.sim.now
        core.task = None
        task.state = DONE
        task.finish_us = now
        self.pending_tasks -= 1
        nxt = self._pull_next(core)
        if nxt is not None:
            self._start_task(core, nxt, now)
        else:
            self._set_core_state(core, C0_IDLE, now)
        # Completion callback runs before any idle notification so that
        # same-instant child dispatches can land on the freed core.
        if self.on_task_done is not None:
            self.on_task_done(self, task)
        if (core.task is None and self.pending_tasks == 0
                and self.on_idle is not None):
            self.on_idle(self)

    def _pull_next(self, core: Core) -> Optional[Task]:
        if self.queue_mode == PER_CORE:
            if core.queue:
                return core.queue.popleft()
        elif self.queue:
            return self.queue.popleft()
        if self.pull_remote is not None:
            task = self.pull_remote(self)
            if task is not None:
                # remote pulls were not counted into pending_tasks yet
                self.pending_tasks += 1
                task.state = QUEUED
                return task
        return None

    # -- state machinery ------------------------------------------------------

    def _set_core_state(self, core: Core, state: str, now: SimTime) -> None:
        core.state = state
        core.ledger.on_transition(state, now)

    def _begin(self, comp: _Component, target: str, latency_us: int,
               now: SimTime) -> None:
        if comp.in_transition:
            raise TransitionInProgressError(
                f"{comp.ledger.component}: busy transitioning to {comp.transitioning_to}")
        comp.transitioning_to = target
        if latency_us == 0:
            self._complete_transition(comp, target)
            return
        comp.ledger.on_transition(transition_label(comp.state, target), now)
        self.sim.schedule(now + latency_us, STATE_TRANSITION_COMPLETE,
                          self._complete_transition, comp, target)

    def _complete_transition(self, comp: _Component, target: str) -> None:
        now = self.sim.now
        comp.state = target
        comp.transitioning_to = None
        comp.ledger.on_transition(target, now)
        if isinstance(comp, Core):
            self._after_core_transition(comp, now)
        elif isinstance(comp, Package):
            self._after_package_transition(comp, now)
        else:
            self._after_platform_transition(now)

    # transition completion drives either deeper sleep or demand wake-up

    def _after_core_transition(self, core: Core, now: SimTime) -> None:
        if core.state == C0_IDLE:
            core.wake_after = False
            self._kick(now)
            if self.pending_tasks == 0 and self.on_idle is not None:
                self.on_idle(self)
        else:  # reached a sleep state
            if core.wake_after or self._core_has_demand(core):
                core.wake_after = False
                self._wake_core(core, now)
            else:
                self._advance_sleep(now)

    def _after_package_transition(self, pkg: Package, now: SimTime) -> None:
        self._restamp_server_level(now)
        if pkg.state == PKG_C0:
            pkg.wake_after = False
            self._kick(now)
        else:
            if pkg.wake_after or self._demand() > 0:
                pkg.wake_after = False
                self._begin(pkg, PKG_C0, self.profile.package_wake_latency_us, now)
                self._restamp_server_level(now)
            else:
                self._advance_sleep(now)

    def _after_platform_transition(self, now: SimTime) -> None:
        if self.platform.state == S0:
            # packages/cores come back from the powered-off label
            for pkg in self.packages:
                pkg.ledger.on_transition(pkg.state, now)
                for core in pkg.cores:
                    core.ledger.on_transition(core.state, now)
            self.platform.wake_after = False
            self._restamp_server_level(now)
            self._kick(now)
        else:
            # s3/s_off reached: power is cut below the platform
            for pkg in self.packages:
                pkg.ledger.on_transition(OFF, now)
                for core in pkg.cores:
                    core.ledger.on_transition(OFF, now)
            self._restamp_server_level(now)
            if self.platform.wake_after or self.pending_tasks > 0:
                self.platform.wake_after = False
                self._wake_platform(now)

    def _demand(self) -> int:
        """Queued tasks with no core committed to them yet."""
        waking = sum(1 for c in self.cores
                     if c.transitioning_to == C0_IDLE
                     or (c.state == C0_IDLE and not c.in_transition and c.task is None))
        return max(0, self.queued_count() - waking)

    def _core_has_demand(self, core: Core) -> bool:
        if self.queue_mode == PER_CORE:
            return len(core.queue) > 0
        return self._demand() > 0

    def _kick(self, now: SimTime) -> None:
        """Drive queued work toward execution, waking hardware as needed."""
        if self.queued_count() == 0:
            return
        plat = self.platform
        if plat.in_transition:
            if plat.transitioning_to in (S3, S_OFF):
                plat.wake_after = True
            return
        if plat.state != S0:
            self._wake_platform(now)
            return
        if self.queue_mode == PER_CORE:
            for core in self.cores:
                if not core.queue:
                    continue
                self._kick_core(core, now)
            return
        # unified: start on idle cores first
        while self.queue:
            core = self._idle_core()
            if core is None:
                break
            self._start_task(core, self.queue.popleft(), now)
        need = self._demand()
        if need <= 0:
            return
        # wake sleeping cores in awake packages, lowest ids first;
        # wake sleeping packages only for demand their cores must cover
        for pkg in self.packages:
            if need <= 0:
                break
            if pkg.in_transition:
                if pkg.transitioning_to == PKG_C6:
                    pkg.wake_after = True
                else:  # waking; its cores will cover demand next kick
                    need -= len(pkg.cores)
                continue
            if pkg.state == PKG_C6:
                self._begin(pkg, PKG_C0, self.profile.package_wake_latency_us, now)
                self._restamp_server_level(now)
                need -= len(pkg.cores)
                continue
            for core in pkg.cores:
                if need <= 0:
                    break
                if core.in_transition:
                    if core.transitioning_to in CORE_SLEEP_STATES:
                        core.wake_after = True
                        need -= 1
                    continue
                if core.state in CORE_SLEEP_STATES:
                    self._wake_core(core, now)
                    need -= 1

    def _kick_core(self, core: Core, now: SimTime) -> None:
        pkg = self._package_of(core)
        if pkg.in_transition:
            if pkg.transitioning_to == PKG_C6:
                pkg.wake_after = True
            return
        if pkg.state == PKG_C6:
            self._begin(pkg, PKG_C0, self.profile.package_wake_latency_us, now)
            self._restamp_server_level(now)
            return
        if core.in_transition:
            if core.transitioning_to in CORE_SLEEP_STATES:
                core.wake_after = True
            return
        if core.state in CORE_SLEEP_STATES:
            self._wake_core(core, now)
        elif core.state == C0_IDLE and core.task is None and core.queue:
            self._start_task(core, core.queue.popleft(), now)

    def _package_of(self, core: Core) -> Package:
        return self.packages[core.core_id // len(self.packages[0].cores)]

    def _wake_core(self, core: Core, now: SimTime) -> None:
        latency = self.profile.core_wake_latency_us[core.state]
        self._begin(core, C0_IDLE, latency, now)

    def _wake_platform(self, now: SimTime) -> None:
        if self.platform.state == S_OFF:
            raise IllegalTransitionError(
                f"server {self.server_id} is powered off; cannot wake from s_off")
        self._begin(self.platform, S0, self.profile.platform_wake_latency_us, now)
        self._restamp_server_level(now)

    # -- policy-facing sleep control ---------------------------------------

    def wake(self, now: SimTime) -> None:
        """Bring the platform back toward s0 even with nothing queued.
        A sleep transition already underway finishes first and then
        reverses. Waking from s_off is an error."""
        self.sleep_target = None
        plat = self.platform
        if plat.in_transition:
            if plat.transitioning_to in (S3, S_OFF):
                plat.wake_after = True
            return
        if plat.state != S0:
            self._wake_platform(now)

    def set_sleep_target(self, target: Optional[str], now: SimTime) -> None:
        """Ask the server to descend to PKG_C6 or S3 once idle. Cleared
        automatically when work arrives."""
        if target not in (None, PKG_C6, S3):
            raise IllegalTransitionError(f"invalid sleep target: {target}")
        self.sleep_target = target
        if target is not None:
            self._advance_sleep(now)

    def _advance_sleep(self, now: SimTime) -> None:
        target = self.sleep_target
        if target is None or self.pending_tasks > 0:
            return
        if self.platform.in_transition or self.platform.state != S0:
            return
        all_pkgs_deep = True
        for pkg in self.packages:
            if pkg.state == PKG_C6 and not pkg.in_transition:
                continue
            all_pkgs_deep = False
            if pkg.in_transition:
                continue
            cores_deep = True
            for core in pkg.cores:
                if core.state == C6 and not core.in_transition:
                    continue
                cores_deep = False
                if core.in_transition or core.task is not None:
                    continue
                if core.state == C0_IDLE:
                    self._begin(core, C6,
                                self.profile.core_sleep_latency_us[C6], now)
            if cores_deep:
                self._begin(pkg, PKG_C6, self.profile.package_sleep_latency_us, now)
                self._restamp_server_level(now)
        if target == S3 and all_pkgs_deep:
            self.request_platform_sleep(S3, now)

    # -- explicit transition requests (validated) ----------------------------

    def request_core_sleep(self, core_id: int, target: str, now: SimTime) -> SimTime:
        core = self.cores[core_id]
        if target not in CORE_SLEEP_STATES:
            raise IllegalTransitionError(f"not a core sleep state: {target}")
        if core.in_transition:
            raise TransitionInProgressError(f"core {core_id} mid-transition")
        if core.state != C0_IDLE or core.task is not None:
            raise IllegalTransitionError(
                f"core {core_id} must be c0_idle to sleep (is {core.state})")
        latency = self.profile.core_sleep_latency_us[target]
        self._begin(core, target, latency, now)
        return now + latency

    def request_package_sleep(self, package_id: int, now: SimTime) -> SimTime:
        pkg = self.packages[package_id]
        if pkg.in_transition:
            raise TransitionInProgressError(f"package {package_id} mid-transition")
        if pkg.state != PKG_C0:
            raise IllegalTransitionError(f"package {package_id} already asleep")
        for core in pkg.cores:
            if core.state != C6 or core.in_transition:
                raise IllegalTransitionError(
                    f"package {package_id} sleep needs all cores in c6")
        latency = self.profile.package_sleep_latency_us
        self._begin(pkg, PKG_C6, latency, now)
        self._restamp_server_level(now)
        return now + latency

    def request_platform_sleep(self, target: str, now: SimTime) -> SimTime:
        if target not in (S3, S_OFF):
            raise IllegalTransitionError(f"not a platform sleep state: {target}")
        plat = self.platform
        if plat.in_transition:
            raise TransitionInProgressError("platform mid-transition")
        if plat.state != S0:
            raise IllegalTransitionError(f"platform already in {plat.state}")
        if self.pending_tasks > 0 or self.queued_count() > 0:
            raise IllegalTransitionError("platform sleep requires empty queues")
        for pkg in self.packages:
            if pkg.state != PKG_C6 or pkg.in_transition:
                raise IllegalTransitionError(
                    "platform sleep requires all packages in pkg_c6")
        latency = self.profile.platform_sleep_latency_us
        self._begin(plat, target, latency, now)
        self._restamp_server_level(now)
        return now + latency

    # -- composite server-level residency -------------------------------------

    def _server_level_state(self) -> str:
        plat = self.platform
        if plat.in_transition:
            return SRV_TRANSITION
        if plat.state == S3:
            return SRV_S3
        if plat.state == S_OFF:
            return SRV_OFF
        for pkg in self.packages:
            if pkg.state == PKG_C0 or pkg.transitioning_to == PKG_C0:
                return SRV_ACTIVE
        return SRV_PKG_SLEEP

    def _restamp_server_level(self, now: SimTime) -> None:
        state = self._server_level_state()
        if state != self.state_ledger.state:
            self.state_ledger.on_transition(state, now)

    # -- wiring ----------------------------------------------------------------

    def all_ledgers(self) -> list[tuple[ResidencyLedger, Callable[[str], float]]]:
        """(ledger, power resolver) pairs for energy registration."""
        out: list[tuple[ResidencyLedger, Callable[[str], float]]] = [
            (self.platform.ledger, self.profile.platform_power_of)]
        for pkg in self.packages:
            out.append((pkg.ledger, self.profile.package_power_of))
        for core in self.cores:
            out.append((core.ledger, self.profile.core_power_of))
        return out
