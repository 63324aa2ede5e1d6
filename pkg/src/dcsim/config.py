"""Experiment configuration: strict YAML -> dataclasses.

Loading is fail-closed: a key the schema does not know, anywhere in the
tree, raises ConfigError naming its dotted path. Scalars are type
checked (ints pass where floats are expected, nothing else is coerced).
validate() then applies the cross-field rules and materializes the job
template so structural mistakes surface before any simulation starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from typing import Optional

import yaml

from . import server as srv
from .network import (CARD_ACTIVE, CARD_OFF, CARD_SLEEP, PORT_ACTIVE,
                      PORT_LPI, PORT_OFF, SwitchPowerProfile)
from .server import ServerPowerProfile
from .workload import (EdgeTemplate, JobTemplate, SizeDistribution,
                       TaskTemplate)


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending path."""


# --- leaf sections ----------------------------------------------------------

@dataclass
class ServerPowerConfig:
    core_active_w: float = 8.0
    core_idle_w: float = 3.0
    core_c1_w: float = 2.0
    core_c3_w: float = 1.0
    core_c6_w: float = 0.5
    package_active_w: float = 10.0
    package_sleep_w: float = 2.0
    platform_active_w: float = 30.0
    platform_s3_w: float = 3.0
    platform_off_w: float = 0.0
    core_c1_enter_us: int = 1
    core_c1_wake_us: int = 1
    core_c3_enter_us: int = 50
    core_c3_wake_us: int = 80
    core_c6_enter_us: int = 200
    core_c6_wake_us: int = 400
    package_enter_us: int = 500
    package_wake_us: int = 1000
    platform_enter_us: int = 100_000
    platform_wake_us: int = 300_000
    # Draw during platform suspend/resume; null keeps the max(from, to) rule.
    platform_transition_w: Optional[float] = None

    def to_profile(self) -> ServerPowerProfile:
        return ServerPowerProfile(
            core_power_w={
                srv.C0_ACTIVE: self.core_active_w,
                srv.C0_IDLE: self.core_idle_w,
                srv.C1: self.core_c1_w,
                srv.C3: self.core_c3_w,
                srv.C6: self.core_c6_w,
            },
            package_power_w={
                srv.PKG_C0: self.package_active_w,
                srv.PKG_C6: self.package_sleep_w,
            },
            platform_power_w={
                srv.S0: self.platform_active_w,
                srv.S3: self.platform_s3_w,
                srv.S_OFF: self.platform_off_w,
            },
            core_sleep_latency_us={
                srv.C1: self.core_c1_enter_us,
                srv.C3: self.core_c3_enter_us,
                srv.C6: self.core_c6_enter_us,
            },
            core_wake_latency_us={
                srv.C1: self.core_c1_wake_us,
                srv.C3: self.core_c3_wake_us,
                srv.C6: self.core_c6_wake_us,
            },
            package_sleep_latency_us=self.package_enter_us,
            package_wake_latency_us=self.package_wake_us,
            platform_sleep_latency_us=self.platform_enter_us,
            platform_wake_latency_us=self.platform_wake_us,
            platform_transition_w=self.platform_transition_w,
        )


@dataclass
class SwitchPowerConfig:
    chassis_w: float = 14.7
    port_active_w: float = 0.23
    port_lpi_w: float = 0.023
    port_off_w: float = 0.0
    linecard_active_w: float = 0.0
    linecard_sleep_w: float = 0.0
    ports_per_linecard: int = 0
    port_wake_us: int = 100
    port_sleep_us: int = 10

    def to_profile(self) -> SwitchPowerProfile:
        return SwitchPowerProfile(
            chassis_w=self.chassis_w,
            port_w={PORT_ACTIVE: self.port_active_w,
                    PORT_LPI: self.port_lpi_w,
                    PORT_OFF: self.port_off_w},
            linecard_w={CARD_ACTIVE: self.linecard_active_w,
                        CARD_SLEEP: self.linecard_sleep_w,
                        CARD_OFF: 0.0},
            port_wake_us=self.port_wake_us,
            port_sleep_us=self.port_sleep_us,
            ports_per_linecard=self.ports_per_linecard,
        )


@dataclass
class ServedTypesRule:
    servers: str = "all"  # "all", "3", "0-7", or "0-3,12-15"
    types: list = field(default_factory=list)


@dataclass
class FleetConfig:
    n_servers: int = 1
    packages: int = 1
    cores_per_package: int = 1
    frequency_scale: float = 1.0
    queue_mode: str = "unified"
    served_types: list = field(default_factory=list)  # ServedTypesRule items
    power: ServerPowerConfig = field(default_factory=ServerPowerConfig)


@dataclass
class NetworkConfig:
    topology: str = "none"
    params: dict = field(default_factory=dict)
    link_rate_gbps: float = 1.0
    transport: str = "flow"  # flow | packet
    packet_bytes: int = 1500
    buffer_packets: int = 64
    port_sleep: str = "never"  # never | on_idle
    queue_threshold: int = 0
    idle_hold_ms: float = 0.0  # quiet period before an idle port sleeps
    power: SwitchPowerConfig = field(default_factory=SwitchPowerConfig)


@dataclass
class SizeConfig:
    kind: str = "constant"  # constant | uniform | exponential
    value_ms: Optional[float] = None
    mean_ms: Optional[float] = None
    min_ms: Optional[float] = None
    max_ms: Optional[float] = None

    def to_distribution(self, path: str) -> SizeDistribution:
        given = {k for k, v in (("value_ms", self.value_ms),
                                ("mean_ms", self.mean_ms),
                                ("min_ms", self.min_ms),
                                ("max_ms", self.max_ms)) if v is not None}
        want = {"constant": {"value_ms"}, "uniform": {"min_ms", "max_ms"},
                "exponential": {"mean_ms"}}.get(self.kind)
        if want is None:
            raise ConfigError(f"{path}: unknown size kind {self.kind!r}")
        if given != want:
            raise ConfigError(
                f"{path}: {self.kind} size takes {sorted(want)}, got {sorted(given)}")
        try:
            if self.kind == "constant":
                return SizeDistribution("constant", value_s=self.value_ms / 1000.0)
            if self.kind == "uniform":
                return SizeDistribution("uniform", low_s=self.min_ms / 1000.0,
                                        high_s=self.max_ms / 1000.0)
            return SizeDistribution("exponential", mean_s=self.mean_ms / 1000.0)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None


@dataclass
class TaskConfig:
    name: str = "t0"
    type: str = "default"
    size: SizeConfig = field(default_factory=SizeConfig)


@dataclass
class EdgeConfig:
    src: str = ""
    dst: str = ""
    data_mb: float = 0.0


@dataclass
class JobConfig:
    tasks: list = field(default_factory=list)  # TaskConfig items
    edges: list = field(default_factory=list)  # EdgeConfig items

    def to_template(self, path: str = "workload.job") -> JobTemplate:
        if not self.tasks:
            raise ConfigError(f"{path}: a job needs at least one task")
        tasks = tuple(TaskTemplate(t.name, t.type,
                                   t.size.to_distribution(f"{path}.tasks[{i}].size"))
                      for i, t in enumerate(self.tasks))
        edges = tuple(EdgeTemplate(e.src, e.dst,
                                   int(round(e.data_mb * 1_000_000)))
                      for e in self.edges)
        try:
            return JobTemplate(tasks=tasks, edges=edges)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None


@dataclass
class MmppConfig:
    rate_high_per_s: float = 0.0
    rate_low_per_s: float = 0.0
    switch_high_to_low_per_s: float = 0.0
    switch_low_to_high_per_s: float = 0.0


@dataclass
class WorkloadConfig:
    arrival: str = "poisson"  # poisson | mmpp | trace
    rate_per_s: Optional[float] = None
    utilization: Optional[float] = None
    mmpp: Optional[MmppConfig] = None
    trace_file: Optional[str] = None
    trace_unit: str = "s"
    max_jobs: Optional[int] = None
    job: JobConfig = field(default_factory=JobConfig)


@dataclass
class SchedulerConfig:
    policy: str = "load_balance"
    policy_params: dict = field(default_factory=dict)
    global_queue: bool = False
    keep_dispatch_records: bool = False


@dataclass
class PowerConfig:
    policy: str = "active_idle"
    params: dict = field(default_factory=dict)


@dataclass
class OutputConfig:
    timeseries_interval_s: float = 1.0
    percentiles: list = field(default_factory=lambda: [0.5, 0.9, 0.95, 0.99])


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 1
    duration_s: Optional[float] = None
    fleet: FleetConfig = field(default_factory=FleetConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # -- validation ---------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        f = self.fleet
        if f.n_servers < 1:
            raise ConfigError("fleet.n_servers must be >= 1")
        if f.packages < 1 or f.cores_per_package < 1:
            raise ConfigError("fleet needs at least one package and core")
        if f.frequency_scale <= 0:
            raise ConfigError("fleet.frequency_scale must be positive")
        if f.queue_mode not in (srv.UNIFIED, srv.PER_CORE):
            raise ConfigError(f"fleet.queue_mode: unknown mode {f.queue_mode!r}")
        served = self.served_types_by_server()
        try:
            f.power.to_profile()
        except ValueError as exc:
            raise ConfigError(f"fleet.power: {exc}") from None

        n = self.network
        _TOPOLOGY_PARAMS = {
            "none": set(), "star": set(), "fat_tree": {"k"},
            "bcube": {"n", "k"}, "camcube": {"dims"},
            "flattened_butterfly": {"dims", "concentration"},
        }
        if n.topology not in _TOPOLOGY_PARAMS:
            raise ConfigError(f"network.topology: unknown kind {n.topology!r}")
        want = _TOPOLOGY_PARAMS[n.topology]
        got = set(n.params)
        if got != want:
            raise ConfigError(
                f"network.params: {n.topology} takes {sorted(want)}, got {sorted(got)}")
        if n.transport not in ("flow", "packet"):
            raise ConfigError(f"network.transport: unknown mode {n.transport!r}")
        if n.link_rate_gbps <= 0:
            raise ConfigError("network.link_rate_gbps must be positive")
        if n.packet_bytes <= 0 or n.buffer_packets < 1:
            raise ConfigError("network.packet_bytes/buffer_packets must be positive")
        if n.port_sleep not in ("never", "on_idle"):
            raise ConfigError(f"network.port_sleep: unknown mode {n.port_sleep!r}")
        if n.queue_threshold < 0:
            raise ConfigError("network.queue_threshold must be >= 0")
        if n.idle_hold_ms < 0:
            raise ConfigError("network.idle_hold_ms must be >= 0")
        try:
            n.power.to_profile()
        except ValueError as exc:
            raise ConfigError(f"network.power: {exc}") from None

        w = self.workload
        template = w.job.to_template()
        if w.arrival == "poisson":
            if (w.rate_per_s is None) == (w.utilization is None):
                raise ConfigError(
                    "workload: poisson needs exactly one of rate_per_s/utilization")
            if w.mmpp is not None or w.trace_file is not None:
                raise ConfigError("workload: poisson takes no mmpp/trace settings")
        elif w.arrival == "mmpp":
            if w.mmpp is None:
                raise ConfigError("workload: mmpp arrivals need the mmpp block")
            if w.rate_per_s is not None or w.utilization is not None or w.trace_file is not None:
                raise ConfigError("workload: mmpp takes only the mmpp block")
            m = w.mmpp
            if min(m.rate_high_per_s, m.rate_low_per_s) < 0 or min(
                    m.switch_high_to_low_per_s, m.switch_low_to_high_per_s) <= 0:
                raise ConfigError("workload.mmpp: rates must be >= 0, switching > 0")
        elif w.arrival == "trace":
            if w.trace_file is None:
                raise ConfigError("workload: trace arrivals need trace_file")
            if w.rate_per_s is not None or w.utilization is not None or w.mmpp is not None:
                raise ConfigError("workload: trace takes no rate settings")
            if w.trace_unit not in ("s", "ms", "us"):
                raise ConfigError(f"workload.trace_unit: unknown unit {w.trace_unit!r}")
        else:
            raise ConfigError(f"workload.arrival: unknown process {w.arrival!r}")
        if w.utilization is not None and not 0 < w.utilization < 1:
            raise ConfigError("workload.utilization must be in (0, 1)")
        if w.rate_per_s is not None and w.rate_per_s <= 0:
            raise ConfigError("workload.rate_per_s must be positive")
        if w.max_jobs is not None and w.max_jobs < 1:
            raise ConfigError("workload.max_jobs must be >= 1")
        if self.duration_s is None and w.max_jobs is None and w.arrival != "trace":
            raise ConfigError(
                "unbounded run: set duration_s, workload.max_jobs, or a trace")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")

        # every task type must be runnable somewhere
        for ttype in sorted(template.task_types()):
            if not any(types is None or ttype in types for types in served):
                raise ConfigError(
                    f"workload: task type {ttype!r} is served by no server")

        s = self.scheduler
        from .scheduling import PLACEMENT_POLICIES
        if s.policy not in PLACEMENT_POLICIES:
            raise ConfigError(
                f"scheduler.policy: unknown policy {s.policy!r} "
                f"(known: {sorted(PLACEMENT_POLICIES)})")
        from .powerpolicy import POWER_POLICIES
        if self.power.policy not in POWER_POLICIES:
            raise ConfigError(
                f"power.policy: unknown policy {self.power.policy!r} "
                f"(known: {sorted(POWER_POLICIES)})")

        o = self.output
        if o.timeseries_interval_s <= 0:
            raise ConfigError("output.timeseries_interval_s must be positive")
        for p in o.percentiles:
            if not 0 < p <= 1:
                raise ConfigError("output.percentiles must lie in (0, 1]")
        return self

    def served_types_by_server(self) -> list:
        """Per server: None (serves everything) or a frozenset of types."""
        rules = self.fleet.served_types
        n = self.fleet.n_servers
        if not rules:
            return [None] * n
        assigned: list = [set() for _ in range(n)]
        covered = [False] * n
        for i, rule in enumerate(rules):
            path = f"fleet.served_types[{i}]"
            if not rule.types:
                raise ConfigError(f"{path}: empty type list")
            for sid in _parse_server_range(rule.servers, n, path):
                assigned[sid].update(rule.types)
                covered[sid] = True
        for sid, ok in enumerate(covered):
            if not ok:
                raise ConfigError(
                    f"fleet.served_types: server {sid} matched by no rule")
        return [frozenset(a) for a in assigned]


def _parse_server_range(spec: str, n_servers: int, path: str) -> list[int]:
    if spec == "all":
        return list(range(n_servers))
    out = []
    for part in str(spec).split(","):
        part = part.strip()
        lo, _, hi = part.partition("-")
        try:
            lo_i = int(lo)
            hi_i = int(hi) if hi else lo_i
        except ValueError:
            raise ConfigError(f"{path}: bad server range {part!r}") from None
        if not (0 <= lo_i <= hi_i < n_servers):
            raise ConfigError(
                f"{path}: range {part!r} outside 0..{n_servers - 1}")
        out.extend(range(lo_i, hi_i + 1))
    return out


# --- strict dict -> dataclass construction -----------------------------------

_LIST_ITEM_TYPES = {
    (FleetConfig, "served_types"): ServedTypesRule,
    (JobConfig, "tasks"): TaskConfig,
    (JobConfig, "edges"): EdgeConfig,
}


def _strip_optional(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return tp


def _from_dict(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        sub = f"{path}.{f.name}"
        tp = _strip_optional(hints[f.name])
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _from_dict(tp, value, sub)
        elif (cls, f.name) in _LIST_ITEM_TYPES:
            if not isinstance(value, list):
                raise ConfigError(f"{sub}: expected a list")
            item_cls = _LIST_ITEM_TYPES[(cls, f.name)]
            kwargs[f.name] = [
                _from_dict(item_cls, item, f"{sub}[{i}]")
                for i, item in enumerate(value)]
        else:
            kwargs[f.name] = _check_scalar(tp, value, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_scalar(tp, value, path: str):
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported config field type {tp!r}")


def config_from_dict(data: dict, path: str = "config") -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, path)
    return cfg.validate()


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return config_from_dict(data, path="config")


def config_digest(data: dict) -> str:
    """Stable content hash of the raw config mapping."""
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class SweepSpec:
    """Cross-product sweep: parameters maps dotted config paths to value
    lists; every cell runs once per seed (common random numbers)."""
    parameters: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [1])


def load_sweep(path: str) -> tuple[dict, SweepSpec]:
    """A sweep file is a normal config plus a top-level `sweep` block.
    Returns (base config mapping, sweep spec)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    sweep_raw = data.pop("sweep", None)
    spec = SweepSpec()
    if sweep_raw is not None:
        spec = _from_dict(SweepSpec, sweep_raw, "sweep")
        if not isinstance(spec.seeds, list) or not spec.seeds:
            raise ConfigError("sweep.seeds must be a non-empty list")
        for k, v in spec.parameters.items():
            if not isinstance(v, list) or not v:
                raise ConfigError(f"sweep.parameters.{k}: need a non-empty list")
    config_from_dict(data)  # the base must stand on its own
    return data, spec


def apply_override(data: dict, dotted: str, value) -> dict:
    """Return a copy of the mapping with one dotted path replaced."""
    out = json.loads(json.dumps(data))
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = {}
            node[part] = nxt
        if not isinstance(nxt, dict):
            raise ConfigError(f"sweep path {dotted!r} crosses a non-mapping")
        node = nxt
    node[parts[-1]] = value
    return out
