"""Power-management policies for servers, plus network-aware placement.

A power policy decides when servers descend into sleep states and when
they come back. It wires itself into the scheduler (arrival/completion
listeners, candidate filter) and into each server's on_idle callback.
One policy instance manages the whole fleet.

Built-ins, selected by name through POWER_POLICIES:

  active_idle    servers never sleep (baseline).
  delay_timer    idle for tau seconds -> descend to the target state.
  dual_timer     two pools with different timeouts; pair with the
                 dual_pool placement so the short-timeout pool drains.
  provisioning   periodic load check; drains or wakes whole servers to
                 track a target load band.
  adaptive_pool  hysteresis on jobs-per-active-server moves servers
                 between an active pool (shallow idle sleep) and a
                 sleep pool (deep sleep after a short linger).
"""

from __future__ import annotations

from typing import Optional

from .engine import TIMER_EXPIRY, SimTime, Simulator, seconds_to_us
from .network import NetworkFabric
from .scheduling import GlobalScheduler, PlacementPolicy, register_placement
from .server import PKG_C6, S0, S3, SRV_S3, Server
from .stats import ResidencyLedger
from .workload import Job, Task

POWER_POLICIES: dict[str, type] = {}


def register_power(name: str):
    def deco(cls):
        POWER_POLICIES[name] = cls
        cls.name = name
        return cls
    return deco


class PowerPolicy:
    """Base: owns the fleet-wide sleep/wake decisions."""

    name = "base"
    tick_interval_us: Optional[int] = None  # set to get on_tick callbacks

    def __init__(self, sim: Simulator, servers: list[Server]):
        self.sim = sim
        self.servers = servers

    def attach(self, scheduler: GlobalScheduler) -> None:
        self.scheduler = scheduler

    def on_tick(self, now: SimTime) -> None:
        pass

    def active_server_count(self) -> int:
        """Servers currently held active by this policy (time-series
        column). Default view: platform awake."""
        return sum(1 for s in self.servers if s.is_awake)

    def finalize(self, now: SimTime) -> None:
        """Flush any policy-owned ledgers at end of run."""


@register_power("active_idle")
class ActiveIdlePolicy(PowerPolicy):
    """Servers idle in c0; nothing ever sleeps."""


@register_power("delay_timer")
class DelayTimerPolicy(PowerPolicy):
    """Classic fixed delay: a server that stays idle for timeout_s
    descends to sleep_state (s3 or pkg_c6). Work arriving mid-descent
    reverses it at the next transition boundary."""

    def __init__(self, sim: Simulator, servers: list[Server],
                 timeout_s: float = 1.0, sleep_state: str = S3):
        super().__init__(sim, servers)
        if timeout_s < 0:
            raise ValueError("negative delay timeout")
        if sleep_state not in (S3, PKG_C6):
            raise ValueError(f"delay timer cannot target {sleep_state}")
        self.sleep_state = sleep_state
        self.timeouts_us = [seconds_to_us(timeout_s)] * len(servers)
        self._timers: dict[int, object] = {}

    def attach(self, scheduler: GlobalScheduler) -> None:
        super().attach(scheduler)
        for server in self.servers:
            server.on_idle = self._went_idle

    def _went_idle(self, server: Server) -> None:
        old = self._timers.pop(server.server_id, None)
        if old is not None:
            self.sim.cancel(old)
        self._timers[server.server_id] = self.sim.schedule_in(
            self.timeouts_us[server.server_id], TIMER_EXPIRY,
            self._expired, server)

    def _expired(self, server: Server) -> None:
        self._timers.pop(server.server_id, None)
        if server.is_awake and server.pending_tasks == 0:
            server.set_sleep_target(self.sleep_state, self.sim.now)


@register_power("dual_timer")
class DualTimerPolicy(DelayTimerPolicy):
    """Two timeout classes: servers below primary_count keep the long
    primary timeout (they absorb steady load and rarely sleep); the
    rest use the short secondary timeout and power down quickly. Meant
    to be paired with the dual_pool placement policy."""

    def __init__(self, sim: Simulator, servers: list[Server],
                 primary_count: int = 1, primary_timeout_s: float = 10.0,
                 secondary_timeout_s: float = 0.1, sleep_state: str = S3):
        super().__init__(sim, servers, timeout_s=primary_timeout_s,
                         sleep_state=sleep_state)
        if not 0 <= primary_count <= len(servers):
            raise ValueError("primary_count out of range")
        self.primary_count = primary_count
        secondary_us = seconds_to_us(secondary_timeout_s)
        for sid in range(primary_count, len(servers)):
            self.timeouts_us[sid] = secondary_us


@register_placement("dual_pool")
class DualPoolPlacement(PlacementPolicy):
    """Fill the primary pool first: fewest-pending awake primary server
    with a free core, then the same among secondaries, then fewest
    pending overall. Keeps the secondary pool idle whenever the primary
    pool can absorb the load."""

    def __init__(self, primary_count: int = 1):
        self.primary_count = primary_count

    def _least_pending(self, servers: list[Server]) -> Server:
        pending = self.scheduler.pending
        return min(servers, key=lambda s: (pending[s.server_id], s.server_id))

    def choose(self, task: Task, candidates: list[Server]) -> Server:
        for pool in (
                [s for s in candidates if s.server_id < self.primary_count],
                [s for s in candidates if s.server_id >= self.primary_count]):
            usable = [s for s in pool if s.is_awake and s.has_free_core()]
            if usable:
                return self._least_pending(usable)
        return self._least_pending(candidates)


@register_power("provisioning")
class ProvisioningPolicy(PowerPolicy):
    """Periodic controller tracking a load band. Load is bound tasks
    per committed server (awake or waking, not draining). Above the
    band: wake the lowest-id sleeper, else cancel a drain. Below the
    band: drain the least-loaded active server (never the last one);
    a draining server takes no new work and sleeps once empty. At most
    one action per check."""

    def __init__(self, sim: Simulator, servers: list[Server],
                 check_interval_s: float = 1.0, low_load: float = 0.3,
                 high_load: float = 0.8, sleep_state: str = S3,
                 min_active: int = 1):
        super().__init__(sim, servers)
        if check_interval_s <= 0:
            raise ValueError("check interval must be positive")
        if not 0 <= low_load < high_load:
            raise ValueError("need 0 <= low_load < high_load")
        if not 1 <= min_active <= len(servers):
            raise ValueError("min_active out of range")
        self.tick_interval_us = seconds_to_us(check_interval_s)
        self.low_load = low_load
        self.high_load = high_load
        self.sleep_state = sleep_state
        self.min_active = min_active
        self.draining: set[int] = set()

    def attach(self, scheduler: GlobalScheduler) -> None:
        super().attach(scheduler)
        scheduler.candidate_filter = self._filter
        for server in self.servers:
            server.on_idle = self._went_idle

    def _filter(self, candidates: list[Server]) -> list[Server]:
        return [s for s in candidates
                if s.server_id not in self.draining and self._committed(s)]

    def _committed(self, server: Server) -> bool:
        plat = server.platform
        return plat.state == S0 or plat.transitioning_to == S0

    def _went_idle(self, server: Server) -> None:
        if server.server_id in self.draining:
            server.set_sleep_target(self.sleep_state, self.sim.now)

    def on_tick(self, now: SimTime) -> None:
        committed = [s for s in self.servers
                     if self._committed(s) and s.server_id not in self.draining]
        load = self.scheduler.pending_total() / max(1, len(committed))
        if load > self.high_load:
            sleepers = [s for s in self.servers
                        if not self._committed(s) and s.server_id not in self.draining]
            if sleepers:
                sleepers[0].wake(now)
                return
            if self.draining:
                sid = min(self.draining)
                self.draining.discard(sid)
                self.servers[sid].set_sleep_target(None, now)
                self.servers[sid].wake(now)
            return
        if load < self.low_load and len(committed) > self.min_active:
            pending = self.scheduler.pending
            victim = min(committed,
                         key=lambda s: (pending[s.server_id], s.server_id))
            self.draining.add(victim.server_id)
            if victim.pending_tasks == 0:
                victim.set_sleep_target(self.sleep_state, now)

    def active_server_count(self) -> int:
        return sum(1 for s in self.servers
                   if self._committed(s) and s.server_id not in self.draining)


@register_power("adaptive_pool")
class AdaptivePoolPolicy(PowerPolicy):
    """Two pools with hysteresis on jobs-in-system per active server.

    Active-pool servers take all placements and, when idle, drop only
    to package sleep so they restart quickly. Sleep-pool servers drop
    to package sleep at once and to the platform sleep state after
    linger_s. Crossing wake_threshold promotes the shallowest sleeper
    (waking it); falling below sleep_threshold demotes the least-loaded
    active server. One move per evaluation; evaluated on every job
    arrival and every task completion.
    """

    def __init__(self, sim: Simulator, servers: list[Server],
                 wake_threshold: float = 12.0, sleep_threshold: float = 9.0,
                 linger_s: float = 2.0, min_active: int = 1):
        super().__init__(sim, servers)
        if sleep_threshold > wake_threshold:
            raise ValueError("hysteresis requires sleep_threshold <= wake_threshold")
        if not 1 <= min_active <= len(servers):
            raise ValueError("min_active out of range")
        self.wake_threshold = wake_threshold
        self.sleep_threshold = sleep_threshold
        self.linger_us = seconds_to_us(linger_s)
        self.min_active = min_active
        self.active_pool: set[int] = {s.server_id for s in servers}
        self._timers: dict[int, object] = {}
        # membership over time, for pool-residency reporting
        self.pool_ledgers = {
            s.server_id: ResidencyLedger(f"pool/server{s.server_id}",
                                         "active_pool")
            for s in servers}

    def attach(self, scheduler: GlobalScheduler) -> None:
        super().attach(scheduler)
        scheduler.candidate_filter = self._filter
        scheduler.arrival_listeners.append(self._on_arrival)
        scheduler.completion_listeners.append(self._on_completion)
        for server in self.servers:
            server.on_idle = self._went_idle

    def _filter(self, candidates: list[Server]) -> list[Server]:
        return [s for s in candidates if s.server_id in self.active_pool]

    # -- pool behaviors -------------------------------------------------------

    def _went_idle(self, server: Server) -> None:
        now = self.sim.now
        if server.server_id in self.active_pool:
            server.set_sleep_target(PKG_C6, now)
        else:
            server.set_sleep_target(PKG_C6, now)
            self._arm_linger(server)

    def _arm_linger(self, server: Server) -> None:
        old = self._timers.pop(server.server_id, None)
        if old is not None:
            self.sim.cancel(old)
        self._timers[server.server_id] = self.sim.schedule_in(
            self.linger_us, TIMER_EXPIRY, self._linger_expired, server)

    def _linger_expired(self, server: Server) -> None:
        self._timers.pop(server.server_id, None)
        if (server.server_id not in self.active_pool and server.is_awake
                and server.pending_tasks == 0):
            server.set_sleep_target(S3, self.sim.now)

    # -- pool migration ---------------------------------------------------------

    def _on_arrival(self, job: Job) -> None:
        self._evaluate()

    def _on_completion(self, server: Server, task: Task) -> None:
        self._evaluate()

    def _depth_rank(self, server: Server) -> int:
        plat = server.platform
        if plat.state == S0 and not plat.in_transition:
            return 0  # packages may sleep, platform is up
        if plat.transitioning_to == S0:
            return 1
        if plat.in_transition:
            return 2  # on its way down
        return 3  # fully in s3

    def _evaluate(self) -> None:
        now = self.sim.now
        metric = self.scheduler.jobs_in_system() / max(1, len(self.active_pool))
        if metric > self.wake_threshold and len(self.active_pool) < len(self.servers):
            sleepers = [s for s in self.servers
                        if s.server_id not in self.active_pool]
            pick = min(sleepers,
                       key=lambda s: (self._depth_rank(s), s.server_id))
            self.active_pool.add(pick.server_id)
            self.pool_ledgers[pick.server_id].on_transition("active_pool", now)
            old = self._timers.pop(pick.server_id, None)
            if old is not None:
                self.sim.cancel(old)
            pick.wake(now)
            if pick.pending_tasks == 0 and pick.is_awake:
                # keep active-pool idle posture
                pick.set_sleep_target(PKG_C6, now)
        elif (metric < self.sleep_threshold
              and len(self.active_pool) > self.min_active):
            pending = self.scheduler.pending
            members = [s for s in self.servers
                       if s.server_id in self.active_pool]
            # least loaded leaves; ties shed the highest id so the
            # active pool stays packed at low ids
            victim = min(members,
                         key=lambda s: (pending[s.server_id], -s.server_id))
            self.active_pool.discard(victim.server_id)
            self.pool_ledgers[victim.server_id].on_transition("sleep_pool", now)
            if victim.pending_tasks == 0:
                victim.set_sleep_target(PKG_C6, now)
                self._arm_linger(victim)

    def active_server_count(self) -> int:
        return len(self.active_pool)

    def finalize(self, now: SimTime) -> None:
        for ledger in self.pool_ledgers.values():
            ledger.finalize(now)

    def sleep_pool_s3_fraction(self) -> float:
        """Fleet S3 time over fleet sleep-pool time. S3 is only ever
        reached inside the sleep pool, so this is the share of demoted
        time actually spent in the deep state. Zero sleep-pool time
        yields 0.0."""
        sleep_us = sum(l.residency_us("sleep_pool")
                       for l in self.pool_ledgers.values())
        if sleep_us == 0:
            return 0.0
        s3_us = sum(s.state_ledger.residency_us(SRV_S3) for s in self.servers)
        return s3_us / sleep_us


@register_placement("network_aware")
class NetworkAwarePlacement(PlacementPolicy):
    """Consolidating placement: among awake servers with a free core,
    fewest pending wins; with none available, pick the server whose
    uplink would wake the fewest sleeping switches (then fewest
    pending, then lowest id). Pair with a server sleep policy and the
    idle port controller to keep unused switches dark."""

    def __init__(self, fabric: Optional[NetworkFabric] = None):
        self.fabric = fabric

    def set_fabric(self, fabric: NetworkFabric) -> None:
        self.fabric = fabric

    def choose(self, task: Task, candidates: list[Server]) -> Server:
        pending = self.scheduler.pending
        usable = [s for s in candidates if s.is_awake and s.has_free_core()]
        if usable:
            return min(usable, key=lambda s: (pending[s.server_id], s.server_id))
        if self.fabric is None:
            return min(candidates, key=lambda s: (pending[s.server_id], s.server_id))
        return min(candidates,
                   key=lambda s: (self.fabric.network_wake_cost(s.server_id),
                                  pending[s.server_id], s.server_id))
