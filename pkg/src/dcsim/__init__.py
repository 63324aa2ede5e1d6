"""Deterministic event-driven data center simulator.

Joint model of server power states (per-core, per-package, platform),
switch/port power on a configurable topology, DAG-structured jobs, and
pluggable scheduling plus power-management policies. Integer-microsecond
clock; identical (seed, config) pairs reproduce results bit for bit.
"""

from .engine import SimTime, Simulator, RngStream, CausalityError
from .server import Server, ServerPowerProfile
from .network import NetworkFabric, SwitchPowerProfile, Topology, build_topology
from .workload import JobTemplate, TaskTemplate, EdgeTemplate
from .stats import EnergyAccount, LatencyRecorder, ResidencyLedger

__version__ = "0.1.0"

__all__ = [
    "SimTime", "Simulator", "RngStream", "CausalityError",
    "Server", "ServerPowerProfile",
    "NetworkFabric", "SwitchPowerProfile", "Topology", "build_topology",
    "JobTemplate", "TaskTemplate", "EdgeTemplate",
    "EnergyAccount", "LatencyRecorder", "ResidencyLedger",
    "__version__",
]
