"""Job lifecycle and task placement.

The GlobalScheduler owns every job from submission to completion. Root
tasks are placed when the job arrives. A child task is bound to a
server at the moment its first parent finishes (late binding), so
cross-server edges know their destination before any data moves; it is
dispatched once all parents are done and all inbound transfers have
been delivered. The scheduler's directory tracks, per server, how many
tasks are bound-but-not-finished; placement policies read that count,
which deliberately includes tasks still waiting on transfers.

Placement policies are pluggable via PLACEMENT_POLICIES. The two
built-ins are round_robin (cyclic cursor, skipping servers that cannot
run the task's type) and load_balance (fewest bound tasks, ties to the
lowest server id).

An optional central queue changes where a ready task waits when its
server is busy: instead of the server's own queue it parks in a single
FIFO, and any server that frees a core pulls the oldest task it can
serve (skip-scan by type), rebinding it if it was bound elsewhere.
Parking only happens while some capable server still has work in
flight; otherwise the task is sent to its bound server directly, waking
it if needed, so a parked task always has a future puller.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from .engine import Simulator, SimTime
from .server import Server
from .stats import LatencyRecorder
from .workload import BLOCKED, QUEUED, READY, Job, Task

PLACEMENT_POLICIES: dict[str, type] = {}


def register_placement(name: str):
    def deco(cls):
        PLACEMENT_POLICIES[name] = cls
        cls.name = name
        return cls
    return deco


class PlacementPolicy:
    """Chooses a server for a task from a non-empty candidate list."""

    name = "base"

    def attach(self, scheduler: "GlobalScheduler") -> None:
        self.scheduler = scheduler

    def choose(self, task: Task, candidates: list[Server]) -> Server:
        raise NotImplementedError


@register_placement("round_robin")
class RoundRobinPlacement(PlacementPolicy):
    """Cyclic cursor over server ids; a task that the cursor's server
    cannot run advances the cursor until a capable one is found."""

    def __init__(self) -> None:
        self._cursor = 0

    def choose(self, task: Task, candidates: list[Server]) -> Server:
        by_id = {s.server_id: s for s in candidates}
        n = self.scheduler.n_servers
        for off in range(n):
            sid = (self._cursor + off) % n
            if sid in by_id:
                self._cursor = (sid + 1) % n
                return by_id[sid]
        raise AssertionError("empty candidate list")


@register_placement("load_balance")
class LoadBalancePlacement(PlacementPolicy):
    """Fewest bound-but-unfinished tasks; lowest server id on ties."""

    def choose(self, task: Task, candidates: list[Server]) -> Server:
        pending = self.scheduler.pending
        return min(candidates, key=lambda s: (pending[s.server_id], s.server_id))


class DispatchRecord:
    """Audit entry: one per task handed to a server."""

    __slots__ = ("time_us", "job_id", "task_name", "server_id")

    def __init__(self, time_us: SimTime, job_id: int, task_name: str,
                 server_id: int):
        self.time_us = time_us
        self.job_id = job_id
        self.task_name = task_name
        self.server_id = server_id

    def __repr__(self) -> str:
        return (f"DispatchRecord(t={self.time_us}, job={self.job_id}, "
                f"task={self.task_name!r}, server={self.server_id})")


class GlobalScheduler:
    def __init__(self, sim: Simulator, servers: list[Server],
                 placement: PlacementPolicy,
                 latency: Optional[LatencyRecorder] = None,
                 use_global_queue: bool = False,
                 keep_dispatch_records: bool = False):
        self.sim = sim
        self.servers = servers
        self.placement = placement
        placement.attach(self)
        self.latency = latency if latency is not None else LatencyRecorder()
        self.use_global_queue = use_global_queue
        self.keep_dispatch_records = keep_dispatch_records
        self.records: list[DispatchRecord] = []
        self.pending: dict[int, int] = {s.server_id: 0 for s in servers}
        self.global_queue: deque[Task] = deque()
        # transfer(src_server, dst_server, size_bytes, done_callback);
        # None means cross-server data moves instantaneously.
        self.transfer: Optional[Callable[[int, int, int, Callable[[], None]],
                                         None]] = None
        # power policies may narrow the candidate set (e.g. draining
        # servers); an empty filter result falls back to the full set
        self.candidate_filter: Optional[
            Callable[[list[Server]], list[Server]]] = None
        self.on_job_complete: Optional[Callable[[Job], None]] = None
        self.arrival_listeners: list[Callable[[Job], None]] = []
        self.completion_listeners: list[Callable[[Server, Task], None]] = []
        self.jobs_submitted = 0
        self.jobs_completed = 0
        self.jobs_rejected = 0
        self.tasks_dispatched = 0
        for server in servers:
            server.on_task_done = self._task_done
            if use_global_queue:
                server.pull_remote = self._pull_for

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    def jobs_in_system(self) -> int:
        return self.jobs_submitted - self.jobs_completed

    def pending_total(self) -> int:
        return sum(self.pending.values())

    # -- submission -----------------------------------------------------------

    def submit_job(self, job: Job) -> bool:
        """Accept and start a job, or reject it (False) when some task
        type is served by no server at all."""
        for task in job.tasks:
            if not any(s.serves(task.task_type) for s in self.servers):
                self.jobs_rejected += 1
                return False
        self.jobs_submitted += 1
        for task in job.root_tasks():
            task.state = READY
            self._bind(task)
            self._dispatch(task)
        for fn in self.arrival_listeners:
            fn(job)
        return True

    # -- binding and dispatch ---------------------------------------------------

    def _serving(self, task: Task) -> list[Server]:
        return [s for s in self.servers if s.serves(task.task_type)]

    def _bind(self, task: Task) -> Server:
        serving = self._serving(task)
        if self.use_global_queue:
            free = [s for s in serving if s.is_awake and s.has_free_core()]
            candidates = free if free else serving
        else:
            candidates = serving
        if self.candidate_filter is not None:
            kept = self.candidate_filter(candidates)
            if kept:
                candidates = kept
        server = self.placement.choose(task, candidates)
        task.assigned_server = server.server_id
        self.pending[server.server_id] += 1
        return server

    def _dispatch(self, task: Task) -> None:
        """Hand a READY, bound task to the execution layer."""
        server = self.servers[task.assigned_server]
        if self.use_global_queue and not (server.is_awake and server.has_free_core()):
            # Park centrally while someone capable is still working;
            # otherwise push to the bound server (waking it) so the
            # task cannot be stranded.
            if any(s.pending_tasks > 0 for s in self._serving(task)):
                task.state = QUEUED
                self.global_queue.append(task)
                return
        self._record(task)
        server.enqueue_task(task, self.sim.now)

    def _record(self, task: Task) -> None:
        self.tasks_dispatched += 1
        if self.keep_dispatch_records:
            self.records.append(DispatchRecord(
                self.sim.now, task.job.job_id, task.name, task.assigned_server))

    def _pull_for(self, server: Server) -> Optional[Task]:
        """Oldest parked task this server can run; rebinds if the task
        was bound elsewhere (its inputs are assumed re-fetched for free)."""
        for i, task in enumerate(self.global_queue):
            if server.serves(task.task_type):
                del self.global_queue[i]
                if task.assigned_server != server.server_id:
                    self.pending[task.assigned_server] -= 1
                    self.pending[server.server_id] += 1
                    task.assigned_server = server.server_id
                self._record(task)
                return task
        return None

    # -- progress ---------------------------------------------------------------

    def _task_done(self, server: Server, task: Task) -> None:
        now = self.sim.now
        self.pending[server.server_id] -= 1
        job = task.job
        job.done_count += 1
        for child, data_bytes in task.children:
            child.remaining_parents -= 1
            if child.assigned_server is None:
                self._bind(child)
            if (data_bytes > 0 and self.transfer is not None
                    and child.assigned_server != server.server_id):
                child.pending_transfers += 1
                self.transfer(server.server_id, child.assigned_server,
                              data_bytes,
                              lambda c=child: self._transfer_done(c))
            self._maybe_ready(child)
        if job.is_complete():
            job.completion_us = now
            self.jobs_completed += 1
            self.latency.record(job.sojourn_us())
            if self.on_job_complete is not None:
                self.on_job_complete(job)
        for fn in self.completion_listeners:
            fn(server, task)

    def _transfer_done(self, child: Task) -> None:
        child.pending_transfers -= 1
        self._maybe_ready(child)

    def _maybe_ready(self, child: Task) -> None:
        if (child.state == BLOCKED and child.remaining_parents == 0
                and child.pending_transfers == 0):
            child.state = READY
            self._dispatch(child)
