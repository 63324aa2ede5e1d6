"""Experiment orchestration: config -> built simulation -> results.

build_experiment wires every subsystem from a validated config; run()
drives arrivals until the stop condition and produces a RunResult whose
summary rows are emitted in a fixed order with fixed formatting, so a
(seed, config) pair reproduces its output files byte for byte.

Stop conditions: duration_s is a hard cut at that simulated time.
Without it, the run drains: arrivals stop (max_jobs reached or trace
exhausted) and the loop exits once every accepted job has completed.

run_sweep expands a base config across a parameter grid and a seed
list (full cross product). Every cell of the grid reuses the same seed
list, so paired cells share identical arrival and size draws (common
random numbers). Cells run in a process pool when parallelism > 1;
results are identical to a serial run.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Optional

from .config import (ExperimentConfig, SweepSpec, apply_override,
                     config_digest, config_from_dict)
from .engine import (CONTROLLER_TICK, JOB_ARRIVAL, RngStream, SimTime,
                     Simulator, seconds_to_us, us_to_seconds)
from .network import NetworkFabric, build_topology
from .powerpolicy import POWER_POLICIES, NetworkAwarePlacement, PowerPolicy
from .scheduling import PLACEMENT_POLICIES, GlobalScheduler
from .server import SRV_S3, C0_ACTIVE, Server
from .stats import (EnergyAccount, TimeSeries, write_summary_csv,
                    write_timeseries_csv)
from .workload import MmppState, instantiate_job, load_trace

_MMPP_STREAM = "arrivals/mmpp"


class Experiment:
    """A fully wired single run."""

    def __init__(self, cfg: ExperimentConfig, seed: Optional[int] = None):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.sim = Simulator()
        self.template = cfg.workload.job.to_template()

        # fleet
        profile = cfg.fleet.power.to_profile()
        served = cfg.served_types_by_server()
        self.servers = [
            Server(sid, self.sim, profile,
                   n_packages=cfg.fleet.packages,
                   cores_per_package=cfg.fleet.cores_per_package,
                   frequency_scale=cfg.fleet.frequency_scale,
                   queue_mode=cfg.fleet.queue_mode,
                   served_task_types=served[sid])
            for sid in range(cfg.fleet.n_servers)]

        # network
        self.fabric: Optional[NetworkFabric] = None
        if cfg.network.topology != "none":
            topo = build_topology(cfg.network.topology, cfg.fleet.n_servers,
                                  cfg.network.link_rate_gbps * 1e9,
                                  **cfg.network.params)
            self.fabric = NetworkFabric(
                self.sim, topo, cfg.network.power.to_profile(),
                port_sleep_mode=cfg.network.port_sleep,
                queue_threshold=cfg.network.queue_threshold,
                buffer_packets=cfg.network.buffer_packets,
                idle_hold_us=seconds_to_us(cfg.network.idle_hold_ms / 1000.0))

        # scheduling
        placement_cls = PLACEMENT_POLICIES[cfg.scheduler.policy]
        try:
            self.placement = placement_cls(**cfg.scheduler.policy_params)
        except TypeError as exc:
            raise ValueError(f"scheduler.policy_params: {exc}") from None
        if isinstance(self.placement, NetworkAwarePlacement):
            self.placement.set_fabric(self.fabric)
        self.scheduler = GlobalScheduler(
            self.sim, self.servers, self.placement,
            use_global_queue=cfg.scheduler.global_queue,
            keep_dispatch_records=cfg.scheduler.keep_dispatch_records)
        if self.fabric is not None:
            fabric = self.fabric
            if cfg.network.transport == "flow":
                self.scheduler.transfer = (
                    lambda src, dst, nbytes, cb:
                    fabric.start_flow(src, dst, nbytes, lambda _f: cb()))
            else:
                pkt = cfg.network.packet_bytes
                self.scheduler.transfer = (
                    lambda src, dst, nbytes, cb:
                    fabric.send_packets(src, dst, nbytes, pkt, lambda _m: cb()))

        # power management
        power_cls = POWER_POLICIES[cfg.power.policy]
        try:
            self.policy: PowerPolicy = power_cls(
                self.sim, self.servers, **cfg.power.params)
        except TypeError as exc:
            raise ValueError(f"power.params: {exc}") from None
        self.policy.attach(self.scheduler)

        # workload generation state
        self._arrival_rng = RngStream(self.seed, "arrivals")
        self._size_rng = RngStream(self.seed, "sizes")
        self._mmpp: Optional[MmppState] = None
        w = cfg.workload
        if w.arrival == "mmpp":
            m = w.mmpp
            self._mmpp = MmppState(
                rate_high_per_s=m.rate_high_per_s,
                rate_low_per_s=m.rate_low_per_s,
                switch_high_to_low_per_s=m.switch_high_to_low_per_s,
                switch_low_to_high_per_s=m.switch_low_to_high_per_s)
        self._trace_iter = None
        self.trace_warnings = 0
        if w.arrival == "trace":
            with open(w.trace_file, "r", encoding="utf-8") as fh:
                trace = load_trace(fh, w.trace_unit)
            self._trace_iter = iter(trace.timestamps_us)
            self.trace_warnings = trace.sort_warnings
        self._next_job_id = 0
        self.arrivals_done = False

        # measurement
        self.energy = EnergyAccount()
        for server in self.servers:
            for ledger, resolver in server.all_ledgers():
                self.energy.register("server", ledger, resolver)
        if self.fabric is not None:
            self.fabric.register_energy(self.energy)
        self.series = TimeSeries(seconds_to_us(cfg.output.timeseries_interval_s))
        self.end_us: SimTime = 0

    # -- arrival process ------------------------------------------------------

    def poisson_rate_per_s(self) -> float:
        w = self.cfg.workload
        if w.rate_per_s is not None:
            return w.rate_per_s
        # utilization: busy-core fraction target. Mean job work at the
        # configured frequency spread over every core in the fleet.
        work_s = self.template.mean_total_work_s() / self.cfg.fleet.frequency_scale
        n_cores = self.cfg.fleet.n_servers * \
            self.cfg.fleet.packages * self.cfg.fleet.cores_per_package
        return w.utilization * n_cores / work_s

    def _next_interarrival_us(self) -> Optional[int]:
        w = self.cfg.workload
        if w.arrival == "poisson":
            return max(1, seconds_to_us(
                self._arrival_rng.exponential(1.0 / self.poisson_rate_per_s())))
        if w.arrival == "mmpp":
            return max(1, seconds_to_us(
                self._mmpp.next_arrival(self._arrival_rng)))
        return None  # trace: absolute stamps

    def _schedule_first_arrival(self) -> None:
        w = self.cfg.workload
        if w.max_jobs is not None and w.max_jobs == 0:
            self.arrivals_done = True
            return
        if self._trace_iter is not None:
            stamp = next(self._trace_iter, None)
            if stamp is None:
                self.arrivals_done = True
                return
            self.sim.schedule(stamp, JOB_ARRIVAL, self._arrive)
        else:
            self.sim.schedule(self._next_interarrival_us(), JOB_ARRIVAL,
                              self._arrive)

    def _arrive(self) -> None:
        now = self.sim.now
        job = instantiate_job(self.template, self._size_rng,
                              self._next_job_id, now)
        self._next_job_id += 1
        self.scheduler.submit_job(job)
        w = self.cfg.workload
        if w.max_jobs is not None and self._next_job_id >= w.max_jobs:
            self.arrivals_done = True
            return
        if self._trace_iter is not None:
            stamp = next(self._trace_iter, None)
            if stamp is None:
                self.arrivals_done = True
                return
            # duplicate stamps collapse onto the same tick
            self.sim.schedule(max(stamp, now), JOB_ARRIVAL, self._arrive)
        else:
            self.sim.schedule(now + self._next_interarrival_us(),
                              JOB_ARRIVAL, self._arrive)

    # -- periodic machinery -----------------------------------------------------

    def _sample(self) -> None:
        fleet_w = sum(s.power_w() for s in self.servers)
        awake = 0
        if self.fabric is not None:
            fleet_w += self.fabric.total_power_w()
            awake = self.fabric.awake_switch_count()
        self.series.sample(self.sim.now, self.policy.active_server_count(),
                           self.scheduler.jobs_in_system(), fleet_w, awake)

    def _series_tick(self) -> None:
        self._sample()
        self.sim.schedule(self.sim.now + self.series.interval_us,
                          CONTROLLER_TICK, self._series_tick)

    def _policy_tick(self) -> None:
        self.policy.on_tick(self.sim.now)
        self.sim.schedule(self.sim.now + self.policy.tick_interval_us,
                          CONTROLLER_TICK, self._policy_tick)

    # -- run ----------------------------------------------------------------------

    def run(self) -> "RunResult":
        cfg = self.cfg
        self._sample()  # t=0 row
        self.sim.schedule(self.series.interval_us, CONTROLLER_TICK,
                          self._series_tick)
        if self.policy.tick_interval_us is not None:
            self.sim.schedule(self.policy.tick_interval_us, CONTROLLER_TICK,
                              self._policy_tick)
        self._schedule_first_arrival()

        if cfg.duration_s is not None:
            self.sim.run_until(seconds_to_us(cfg.duration_s))
        else:
            # drain: all arrivals in, all accepted jobs out
            while not (self.arrivals_done
                       and self.scheduler.jobs_in_system() == 0):
                if not self.sim.step():
                    break  # out of events; leave whatever is stuck visible
        self.end_us = self.sim.now

        for server in self.servers:
            server.state_ledger.finalize(self.end_us)
        if self.fabric is not None:
            self.fabric.finalize(self.end_us)
        self.policy.finalize(self.end_us)
        self.energy.finalize(self.end_us)
        return RunResult(self)


def _core_busy_fraction(experiment: Experiment) -> float:
    total = 0
    busy = 0
    for server in experiment.servers:
        for core in server.cores:
            busy += core.ledger.residency_us(C0_ACTIVE)
            total += core.ledger.total_us()
    return busy / total if total else 0.0


class RunResult:
    """Holds the built experiment plus derived summary rows."""

    def __init__(self, experiment: Experiment):
        self.experiment = experiment
        self.summary = self._build_summary()

    def _build_summary(self) -> list[tuple[str, object]]:
        ex = self.experiment
        cfg = ex.cfg
        sched = ex.scheduler
        lat = sched.latency
        rows: list[tuple[str, object]] = [
            ("experiment", cfg.name),
            ("seed", ex.seed),
            ("elapsed_s", us_to_seconds(ex.end_us)),
            ("jobs_submitted", sched.jobs_submitted),
            ("jobs_completed", sched.jobs_completed),
            ("jobs_rejected", sched.jobs_rejected),
            ("tasks_dispatched", sched.tasks_dispatched),
        ]
        if lat.count() > 0:
            rows.append(("latency_mean_s", us_to_seconds(lat.mean_us())))
            for p in cfg.output.percentiles:
                rows.append((f"latency_p{round(p * 100)}_s",
                             us_to_seconds(lat.percentile_us(p))))
            rows.append(("latency_max_s", us_to_seconds(lat.max_us())))
        else:
            rows.append(("latency_mean_s", float("nan")))
        rows.extend([
            ("server_energy_j", ex.energy.group_energy_j("server")),
            ("network_energy_j", ex.energy.group_energy_j("network")),
            ("total_energy_j", ex.energy.total_energy_j()),
            ("mean_fleet_power_w",
             ex.energy.total_energy_j() / us_to_seconds(ex.end_us)
             if ex.end_us else 0.0),
            ("core_busy_fraction", _core_busy_fraction(ex)),
            ("fleet_s3_seconds", us_to_seconds(sum(
                s.state_ledger.residency_us(SRV_S3) for s in ex.servers))),
        ])
        if ex.fabric is not None:
            awake_us = sum(sw.awake_us() for sw in ex.fabric.topology.switches)
            rows.extend([
                ("flows_completed", ex.fabric.flows_completed),
                ("bytes_delivered", ex.fabric.bytes_delivered),
                ("packets_delivered", ex.fabric.packets_delivered),
                ("packets_dropped", ex.fabric.packets_dropped),
                ("switch_awake_seconds", us_to_seconds(awake_us)),
            ])
        if ex.trace_warnings:
            rows.append(("trace_inversion_warnings", ex.trace_warnings))
        pool_fraction = getattr(ex.policy, "sleep_pool_s3_fraction", None)
        if pool_fraction is not None:
            rows.append(("sleep_pool_s3_fraction", pool_fraction()))
        return rows

    def summary_dict(self) -> dict:
        return dict(self.summary)

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        write_summary_csv(os.path.join(out_dir, "summary.csv"), self.summary)
        write_timeseries_csv(os.path.join(out_dir, "timeseries.csv"),
                             self.experiment.series)
        if self.experiment.fabric is not None:
            with open(os.path.join(out_dir, "topology.txt"), "w",
                      encoding="utf-8") as fh:
                fh.write(self.experiment.fabric.topology.to_adjacency_text())


def run_config(data: dict, seed: Optional[int] = None) -> RunResult:
    """Build and run from a raw config mapping."""
    cfg = config_from_dict(data)
    return Experiment(cfg, seed=seed).run()


# --- sweeps -------------------------------------------------------------------

@dataclass
class SweepCell:
    cell_id: str
    overrides: dict
    seed: int
    data: dict = field(repr=False, default_factory=dict)


def _sanitize(value) -> str:
    text = str(value)
    return "".join(ch if ch.isalnum() or ch in "._-" else "-" for ch in text)


def expand_sweep(base: dict, spec: SweepSpec) -> list[SweepCell]:
    """Cross product, parameters in sorted path order, seeds innermost.
    Cell ids look like 'power.params.timeout_s=0.4/seed=3'."""
    paths = sorted(spec.parameters)
    combos: list[list[tuple[str, object]]] = [[]]
    for path in paths:
        combos = [combo + [(path, value)]
                  for combo in combos
                  for value in spec.parameters[path]]
    cells = []
    for combo in combos:
        data = base
        for path, value in combo:
            data = apply_override(data, path, value)
        label = "/".join(f"{p}={_sanitize(v)}" for p, v in combo)
        for seed in spec.seeds:
            cell_id = f"{label}/seed={seed}" if label else f"seed={seed}"
            cells.append(SweepCell(cell_id, dict(combo), seed, data))
    return cells


def _run_cell(cell: SweepCell) -> tuple[str, list[tuple[str, object]]]:
    result = run_config(cell.data, seed=cell.seed)
    return cell.cell_id, result.summary


def run_sweep(base: dict, spec: SweepSpec, out_dir: Optional[str] = None,
              parallelism: int = 1) -> list[tuple[str, list[tuple[str, object]]]]:
    """Run every cell; returns (cell_id, summary rows) sorted by cell id.
    With out_dir set, writes per-cell summary files, an aggregate CSV,
    and a manifest tying outputs to the base config digest."""
    cells = expand_sweep(base, spec)
    if parallelism > 1:
        with multiprocessing.Pool(parallelism) as pool:
            results = pool.map(_run_cell, cells)
    else:
        results = [_run_cell(cell) for cell in cells]
    results.sort(key=lambda item: item[0])
    if out_dir is not None:
        _write_sweep_outputs(base, spec, cells, results, out_dir)
    return results


def _write_sweep_outputs(base: dict, spec: SweepSpec, cells: list[SweepCell],
                         results, out_dir: str) -> None:
    from .stats import fmt
    os.makedirs(out_dir, exist_ok=True)
    by_id = {c.cell_id: c for c in cells}
    param_paths = sorted(spec.parameters)
    # aggregate: one row per cell, fixed column order; the cell and
    # seed prefix columns already identify the run
    summary_keys: list[str] = []
    for _, rows in results:
        for key, _ in rows:
            if key not in summary_keys and key not in ("experiment", "seed"):
                summary_keys.append(key)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w", newline="") as fh:
        fh.write(",".join(["cell", "seed"] + param_paths + summary_keys) + "\n")
        for cell_id, rows in results:
            cell = by_id[cell_id]
            summary = dict(rows)
            values = [cell_id, str(cell.seed)]
            values += [fmt(cell.overrides.get(p, "")) for p in param_paths]
            values += [fmt(summary[k]) if k in summary else ""
                       for k in summary_keys]
            fh.write(",".join(values) + "\n")
    for cell_id, rows in results:
        cell_dir = os.path.join(out_dir, _sanitize(cell_id.replace("/", "__")))
        os.makedirs(cell_dir, exist_ok=True)
        write_summary_csv(os.path.join(cell_dir, "summary.csv"), rows)
    manifest = {
        "base_config_sha256": config_digest(base),
        "parameters": {p: spec.parameters[p] for p in param_paths},
        "seeds": list(spec.seeds),
        "cells": [{"cell": c.cell_id, "seed": c.seed,
                   "overrides": c.overrides,
                   "dir": _sanitize(c.cell_id.replace("/", "__"))}
                  for c in sorted(cells, key=lambda c: c.cell_id)],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
