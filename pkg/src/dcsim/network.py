"""Network model: topologies, routing, flows, packets, switch power.

Topology kinds: star, fat_tree, bcube, camcube (server-only torus), and
flattened_butterfly (experimental). Nodes are ("server", id) or
("switch", id) pairs; links are undirected with a port object at each
end. Only switch ports are powered; server NIC power is considered part
of the server platform.

Routing is deterministic shortest-path (BFS over the adjacency built in
construction order). Equal-cost choices are broken by a documented hash
of the flow id: h = ((flow_id * 2654435761) ^ (hop * 40503)) mod 2^32,
candidate index = h mod n. The same (topology, src, dst, flow_id)
always yields the same route.

Flow transport is ideal max-min fair sharing: whenever a flow starts or
ends, rates are recomputed by progressive filling and every in-flight
completion event is rescheduled; bytes delivered are conserved across
any number of recomputations. Packet transport is store-and-forward
with per-egress-port FIFO queues, bounded buffers (overflows dropped
and counted), and no retransmission.

A flow occupies the egress port of every link on its route; a port with
no occupancy may drop to LPI under the idle controller. A switch is
awake while any of its ports is active or transitioning.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import (FLOW_COMPLETE, PACKET_HOP, PORT_IDLE_CHECK,
                     STATE_TRANSITION_COMPLETE,
                     SimTime, Simulator)
from .stats import ResidencyLedger, split_transition_label, transition_label

# Port states.
PORT_ACTIVE = "active"
PORT_LPI = "lpi"
PORT_OFF = "off"

# Line card states.
CARD_ACTIVE = "active"
CARD_SLEEP = "sleep"
CARD_OFF = "off"

CHASSIS_ON = "on"

SERVER = "server"
SWITCH = "switch"

NodeRef = tuple  # (kind, id)


def ecmp_index(flow_id: int, hop: int, n: int) -> int:
    """Documented equal-cost tie-break hash (multiplicative mixing)."""
    h = ((flow_id * 2654435761) ^ (hop * 40503)) & 0xFFFFFFFF
    return h % n


@dataclass(frozen=True)
class SwitchPowerProfile:
    """Power/latency numbers for one switch model. The reference
    profile models a 24-port access switch: 14.7 W chassis, 0.23 W per
    active port, LPI at 10% of active draw."""
    chassis_w: float = 14.7
    port_w: dict = field(default_factory=lambda: {
        PORT_ACTIVE: 0.23, PORT_LPI: 0.023, PORT_OFF: 0.0})
    linecard_w: dict = field(default_factory=lambda: {
        CARD_ACTIVE: 0.0, CARD_SLEEP: 0.0, CARD_OFF: 0.0})
    port_wake_us: int = 100
    port_sleep_us: int = 10
    ports_per_linecard: int = 0  # 0 means one implicit card for all ports

    def __post_init__(self) -> None:
        if self.chassis_w < 0:
            raise ValueError("negative chassis power")
        pw = self.port_w
        if not pw[PORT_ACTIVE] >= pw[PORT_LPI] >= pw[PORT_OFF] >= 0:
            raise ValueError("port powers must be non-increasing with depth")
        lw = self.linecard_w
        if not lw[CARD_ACTIVE] >= lw[CARD_SLEEP] >= lw[CARD_OFF] >= 0:
            raise ValueError("line-card powers must be non-increasing with depth")
        if self.port_wake_us <= 0:
            raise ValueError("port wake latency must be > 0")
        if self.port_sleep_us < 0:
            raise ValueError("negative port sleep latency")

    def port_power_of(self, label: str) -> float:
        pair = split_transition_label(label)
        if pair is not None:
            return max(self.port_power_of(pair[0]), self.port_power_of(pair[1]))
        if label not in self.port_w:
            raise KeyError(f"no port power for state {label!r}")
        return self.port_w[label]

    def card_power_of(self, label: str) -> float:
        if label not in self.linecard_w:
            raise KeyError(f"no line-card power for state {label!r}")
        return self.linecard_w[label]

    def chassis_power_of(self, label: str) -> float:
        if label != CHASSIS_ON:
            raise KeyError(f"no chassis power for state {label!r}")
        return self.chassis_w


class Port:
    """One directional egress endpoint of a link.

    Switch ports carry a residency ledger and may sleep; server ports
    are passive (always active, unpowered in the energy account).
    """

    __slots__ = ("owner", "index", "link", "state", "transitioning_to",
                 "wake_after", "ledger", "active_flows", "queue",
                 "serializing", "drops", "switch", "last_active_us")

    def __init__(self, owner: NodeRef, index: int):
        self.owner = owner
        self.index = index
        self.link: Optional["Link"] = None
        self.state = PORT_ACTIVE
        self.transitioning_to: Optional[str] = None
        self.wake_after = False
        self.ledger: Optional[ResidencyLedger] = None
        self.switch: Optional["Switch"] = None  # back-ref for switch ports
        self.active_flows = 0
        self.queue: deque = deque()
        self.serializing = False
        self.drops = 0
        self.last_active_us = 0

    @property
    def is_switch_port(self) -> bool:
        return self.owner[0] == SWITCH

    @property
    def is_available(self) -> bool:
        return self.state == PORT_ACTIVE and self.transitioning_to is None

    @property
    def in_transition(self) -> bool:
        return self.transitioning_to is not None

    def occupancy(self) -> int:
        return self.active_flows + len(self.queue) + (1 if self.serializing else 0)

    def __repr__(self) -> str:
        return f"<Port {self.owner}#{self.index} {self.state}>"


@dataclass
class Link:
    link_id: int
    node_a: NodeRef
    node_b: NodeRef
    port_a: Port
    port_b: Port
    rate_bps: float

    def __post_init__(self) -> None:
        if self.rate_bps <= 0:
            raise ValueError("link rate must be positive")
        self.port_a.link = self
        self.port_b.link = self

    def egress_port(self, from_node: NodeRef) -> Port:
        if from_node == self.node_a:
            return self.port_a
        if from_node == self.node_b:
            return self.port_b
        raise ValueError(f"{from_node} is not an endpoint of link {self.link_id}")

    def other_end(self, from_node: NodeRef) -> NodeRef:
        if from_node == self.node_a:
            return self.node_b
        if from_node == self.node_b:
            return self.node_a
        raise ValueError(f"{from_node} is not an endpoint of link {self.link_id}")


class Switch:
    """A switch chassis: ports, derived line cards, awake tracking."""

    def __init__(self, switch_id: int, name: str, role: str):
        self.switch_id = switch_id
        self.name = name
        self.role = role  # hub | edge | agg | core | level<k> | fb
        self.ports: list[Port] = []
        self.chassis_ledger = ResidencyLedger(f"{name}/chassis", CHASSIS_ON)
        self.awake_ledger = ResidencyLedger(f"{name}/awake", "awake")
        self._non_sleeping_ports = 0

    def new_port(self) -> Port:
        port = Port((SWITCH, self.switch_id), len(self.ports))
        port.switch = self
        port.ledger = ResidencyLedger(
            f"{self.name}/port{port.index}", PORT_ACTIVE)
        self.ports.append(port)
        self._non_sleeping_ports += 1
        return port

    @property
    def is_awake(self) -> bool:
        return self._non_sleeping_ports > 0

    def note_port_state(self, delta: int, now: SimTime) -> None:
        """delta +1 when a port leaves deep sleep, -1 when it enters."""
        before = self._non_sleeping_ports > 0
        self._non_sleeping_ports += delta
        after = self._non_sleeping_ports > 0
        if before != after:
            self.awake_ledger.on_transition("awake" if after else "asleep", now)

    def awake_us(self) -> int:
        return self.awake_ledger.residency_us("awake")


class Topology:
    """Immutable wiring: nodes, links, adjacency, shortest-path routing."""

    def __init__(self, kind: str, n_servers: int):
        self.kind = kind
        self.n_servers = n_servers
        self.switches: list[Switch] = []
        self.links: list[Link] = []
        self.server_ports: dict[int, list[Port]] = {i: [] for i in range(n_servers)}
        self.adjacency: dict[NodeRef, list[tuple[NodeRef, Link]]] = {}
        self._dist_cache: dict[NodeRef, dict[NodeRef, int]] = {}

    def add_switch(self, name: str, role: str) -> Switch:
        sw = Switch(len(self.switches), name, role)
        self.switches.append(sw)
        self.adjacency.setdefault((SWITCH, sw.switch_id), [])
        return sw

    def _server_port(self, server_id: int) -> Port:
        port = Port((SERVER, server_id), len(self.server_ports[server_id]))
        self.server_ports[server_id].append(port)
        return port

    def _endpoint_port(self, node: NodeRef) -> Port:
        if node[0] == SERVER:
            return self._server_port(node[1])
        return self.switches[node[1]].new_port()

    def add_link(self, node_a: NodeRef, node_b: NodeRef, rate_bps: float) -> Link:
        for node in (node_a, node_b):
            if node[0] == SERVER and not 0 <= node[1] < self.n_servers:
                raise ValueError(f"link references unknown server {node}")
            if node[0] == SWITCH and not 0 <= node[1] < len(self.switches):
                raise ValueError(f"link references unknown switch {node}")
        link = Link(len(self.links), node_a, node_b,
                    self._endpoint_port(node_a), self._endpoint_port(node_b),
                    rate_bps)
        self.links.append(link)
        self.adjacency.setdefault(node_a, []).append((node_b, link))
        self.adjacency.setdefault(node_b, []).append((node_a, link))
        return link

    def n_switch_ports(self) -> int:
        return sum(len(sw.ports) for sw in self.switches)

    def _distances_to(self, dst: NodeRef) -> dict[NodeRef, int]:
        cached = self._dist_cache.get(dst)
        if cached is not None:
            return cached
        dist = {dst: 0}
        frontier = deque([dst])
        while frontier:
            node = frontier.popleft()
            d = dist[node] + 1
            for peer, _ in self.adjacency.get(node, ()):
                if peer not in dist:
                    dist[peer] = d
                    frontier.append(peer)
        self._dist_cache[dst] = dist
        return dist

    def route(self, src_server: int, dst_server: int,
              flow_id: int = 0) -> list[Link]:
        """Ordered links of one shortest path. Equal-cost next hops are
        chosen by ecmp_index(flow_id, hop)."""
        if src_server == dst_server:
            return []
        src: NodeRef = (SERVER, src_server)
        dst: NodeRef = (SERVER, dst_server)
        dist = self._distances_to(dst)
        if src not in dist:
            raise ValueError(f"no path from server {src_server} to {dst_server}")
        path: list[Link] = []
        node = src
        hop = 0
        while node != dst:
            d = dist[node]
            candidates = [(peer, link) for peer, link in self.adjacency[node]
                          if dist.get(peer, d) == d - 1]
            peer, link = candidates[ecmp_index(flow_id, hop, len(candidates))]
            path.append(link)
            node = peer
            hop += 1
        return path

    def uplink_switches(self, server_id: int) -> list[int]:
        """Switch ids that must be awake for this server to reach its
        aggregation point. Fat tree: the edge switch plus its designated
        (lowest-id) aggregation switch. Other kinds: the directly
        attached switches."""
        attached = [peer[1] for peer, _ in self.adjacency.get((SERVER, server_id), ())
                    if peer[0] == SWITCH]
        if self.kind != "fat_tree":
            return sorted(attached)
        out = sorted(attached)
        for edge_id in list(out):
            aggs = sorted(peer[1] for peer, _ in
                          self.adjacency[(SWITCH, edge_id)]
                          if peer[0] == SWITCH
                          and self.switches[peer[1]].role == "agg")
            if aggs:
                out.append(aggs[0])
        return sorted(set(out))

    def to_adjacency_text(self) -> str:
        """One line per link: 'link <id> <kind><id>[p<port>] <-> ...'."""
        def fmt(node: NodeRef, port: Port) -> str:
            return f"{node[0]}{node[1]}:p{port.index}"
        lines = [f"# topology {self.kind}: {self.n_servers} servers, "
                 f"{len(self.switches)} switches, {len(self.links)} links"]
        for link in self.links:
            lines.append(f"link {link.link_id} "
                         f"{fmt(link.node_a, link.port_a)} <-> "
                         f"{fmt(link.node_b, link.port_b)} "
                         f"rate_bps={link.rate_bps:.0f}")
        return "\n".join(lines) + "\n"


# --- builders ---------------------------------------------------------------

def build_star(n_servers: int, rate_bps: float) -> Topology:
    if n_servers < 1:
        raise ValueError("star needs at least one server")
    topo = Topology("star", n_servers)
    hub = topo.add_switch("hub", "hub")
    for s in range(n_servers):
        topo.add_link((SERVER, s), (SWITCH, hub.switch_id), rate_bps)
    return topo


def build_fat_tree(k: int, rate_bps: float) -> Topology:
    """Three-tier fat tree with parameter k (even): k pods of k/2 edge
    and k/2 aggregation switches, (k/2)^2 core switches, k^3/4 hosts."""
    if k < 2 or k % 2 != 0:
        raise ValueError(f"fat tree parameter k must be even and >= 2: {k}")
    half = k // 2
    n_servers = k * k * k // 4
    topo = Topology("fat_tree", n_servers)
    edge_ids = [[topo.add_switch(f"edge{p}.{i}", "edge").switch_id
                 for i in range(half)] for p in range(k)]
    agg_ids = [[topo.add_switch(f"agg{p}.{i}", "agg").switch_id
                for i in range(half)] for p in range(k)]
    core_ids = [topo.add_switch(f"core{j}", "core").switch_id
                for j in range(half * half)]
    # hosts under edge switches
    for s in range(n_servers):
        pod = s // (half * half)
        edge = (s % (half * half)) // half
        topo.add_link((SERVER, s), (SWITCH, edge_ids[pod][edge]), rate_bps)
    # edge <-> agg full bipartite per pod
    for p in range(k):
        for e in range(half):
            for a in range(half):
                topo.add_link((SWITCH, edge_ids[p][e]),
                              (SWITCH, agg_ids[p][a]), rate_bps)
    # agg <-> core: aggregation switch a serves core group a
    for p in range(k):
        for a in range(half):
            for c in range(half):
                topo.add_link((SWITCH, agg_ids[p][a]),
                              (SWITCH, core_ids[a * half + c]), rate_bps)
    return topo


def build_bcube(n: int, k: int, rate_bps: float) -> Topology:
    """BCube(n, k): n^(k+1) servers, (k+1) levels of n^k switches, each
    server wired to one switch per level. Servers relay between levels."""
    if n < 2 or k < 0:
        raise ValueError("bcube needs n >= 2 and k >= 0")
    n_servers = n ** (k + 1)
    topo = Topology("bcube", n_servers)
    level_ids: list[list[int]] = []
    for level in range(k + 1):
        ids = [topo.add_switch(f"l{level}.{j}", f"level{level}").switch_id
               for j in range(n ** k)]
        level_ids.append(ids)
    for s in range(n_servers):
        digits = [(s // n ** i) % n for i in range(k + 1)]
        for level in range(k + 1):
            rest = [d for i, d in enumerate(digits) if i != level]
            j = 0
            for d in reversed(rest):
                j = j * n + d
            topo.add_link((SERVER, s), (SWITCH, level_ids[level][j]), rate_bps)
    return topo


def build_camcube(dims: tuple[int, int, int], rate_bps: float) -> Topology:
    """3D torus of servers with direct server-to-server links (no
    switches). Wraparound links are skipped along dimensions of size 2
    to avoid duplicating a link."""
    dx, dy, dz = dims
    if min(dims) < 2:
        raise ValueError("camcube dimensions must each be >= 2")
    n_servers = dx * dy * dz
    topo = Topology("camcube", n_servers)

    def sid(x: int, y: int, z: int) -> int:
        return (x * dy + y) * dz + z

    for x in range(dx):
        for y in range(dy):
            for z in range(dz):
                s = sid(x, y, z)
                for axis, size, nxt in (
                        (0, dx, sid((x + 1) % dx, y, z)),
                        (1, dy, sid(x, (y + 1) % dy, z)),
                        (2, dz, sid(x, y, (z + 1) % dz))):
                    wrap = ((axis == 0 and x == dx - 1)
                            or (axis == 1 and y == dy - 1)
                            or (axis == 2 and z == dz - 1))
                    if wrap and size == 2:
                        continue
                    topo.add_link((SERVER, s), (SERVER, nxt), rate_bps)
    return topo


def build_flattened_butterfly(dims: tuple[int, int], concentration: int,
                              rate_bps: float) -> Topology:
    """Experimental: 2D flattened butterfly. Switches form a dims[0] x
    dims[1] grid, fully connected within each row and each column;
    'concentration' servers hang off each switch."""
    rows, cols = dims
    if rows < 1 or cols < 1 or concentration < 1:
        raise ValueError("flattened butterfly needs positive dims/concentration")
    n_servers = rows * cols * concentration
    topo = Topology("flattened_butterfly", n_servers)
    grid = [[topo.add_switch(f"fb{r}.{c}", "fb").switch_id
             for c in range(cols)] for r in range(rows)]
    s = 0
    for r in range(rows):
        for c in range(cols):
            for _ in range(concentration):
                topo.add_link((SERVER, s), (SWITCH, grid[r][c]), rate_bps)
                s += 1
    for r in range(rows):
        for c1 in range(cols):
            for c2 in range(c1 + 1, cols):
                topo.add_link((SWITCH, grid[r][c1]), (SWITCH, grid[r][c2]), rate_bps)
    for c in range(cols):
        for r1 in range(rows):
            for r2 in range(r1 + 1, rows):
                topo.add_link((SWITCH, grid[r1][c]), (SWITCH, grid[r2][c]), rate_bps)
    return topo


def build_topology(kind: str, n_servers: int, rate_bps: float,
                   **params) -> Topology:
    """Build by kind name, verifying the server count matches the
    topology's host capacity."""
    if kind == "star":
        topo = build_star(n_servers, rate_bps)
    elif kind == "fat_tree":
        topo = build_fat_tree(params["k"], rate_bps)
    elif kind == "bcube":
        topo = build_bcube(params["n"], params["k"], rate_bps)
    elif kind == "camcube":
        topo = build_camcube(tuple(params["dims"]), rate_bps)
    elif kind == "flattened_butterfly":
        topo = build_flattened_butterfly(
            tuple(params["dims"]), params["concentration"], rate_bps)
    else:
        raise ValueError(f"unknown topology kind: {kind}")
    if topo.n_servers != n_servers:
        raise ValueError(
            f"{kind} topology hosts {topo.n_servers} servers; fleet has {n_servers}")
    return topo


# --- max-min fair rate allocation -------------------------------------------

def max_min_rates(flow_links: dict[int, list[int]],
                  capacities: dict[int, float]) -> dict[int, float]:
    """Progressive filling. flow_links maps flow id -> link ids it
    crosses; capacities maps link id -> bits/s. Returns flow id -> rate.

    Each round finds the tightest link (smallest equal share among its
    unfrozen flows), freezes those flows at that share, removes the
    consumed capacity, and repeats. Deterministic: ties resolve to the
    lowest link id.
    """
    rates: dict[int, float] = {}
    remaining = dict(capacities)
    members: dict[int, list[int]] = {l: [] for l in capacities}
    for fid, links in flow_links.items():
        if not links:
            raise ValueError(f"flow {fid} has an empty route")
        for l in links:
            members[l].append(fid)
    unfrozen = set(flow_links)
    while unfrozen:
        best_share = None
        best_link = None
        for l in sorted(members):
            count = sum(1 for f in members[l] if f in unfrozen)
            if count == 0:
                continue
            share = remaining[l] / count
            if best_share is None or share < best_share:
                best_share = share
                best_link = l
        if best_link is None:
            break
        for f in sorted(members[best_link]):
            if f not in unfrozen:
                continue
            rates[f] = best_share
            unfrozen.discard(f)
            for l in flow_links[f]:
                remaining[l] = max(0.0, remaining[l] - best_share)
    return rates


class Flow:
    """One in-flight transfer."""

    __slots__ = ("flow_id", "src", "dst", "size_bytes", "route",
                 "remaining_bits", "rate_bps", "last_update_us", "state",
                 "blockers", "completion_ev", "on_complete", "started_us")

    def __init__(self, flow_id: int, src: int, dst: int, size_bytes: int,
                 route: list[Link], on_complete: Callable[["Flow"], None]):
        self.flow_id = flow_id
        self.src = src
        self.dst = dst
        self.size_bytes = size_bytes
        self.route = route
        self.remaining_bits = float(size_bytes * 8)
        self.rate_bps = 0.0
        self.last_update_us: SimTime = 0
        self.state = "waiting"
        self.blockers = 0
        self.completion_ev = None
        self.on_complete = on_complete
        self.started_us: SimTime = 0


class ConservationError(RuntimeError):
    """A flow finished with bytes unaccounted for; indicates a bug."""


class NetworkFabric:
    """Runtime state over a Topology: flow transport, packet transport,
    and the idle port controller.

    port_sleep_mode: "never" keeps every port active forever; "on_idle"
    drops a port to LPI once its occupancy (active flows + queued
    packets + serialization in progress) falls to queue_threshold or
    below. Arriving work wakes the port; work waits out the wake
    latency. idle_hold_us delays the drop: the port must stay quiet for
    the whole hold window first, so brief gaps between back-to-back
    transfers do not pay a wake each time.
    """

    def __init__(self, sim: Simulator, topology: Topology,
                 profile: SwitchPowerProfile,
                 port_sleep_mode: str = "never",
                 queue_threshold: int = 0,
                 buffer_packets: int = 64,
                 idle_hold_us: int = 0):
        if port_sleep_mode not in ("never", "on_idle"):
            raise ValueError(f"unknown port sleep mode: {port_sleep_mode}")
        if idle_hold_us < 0:
            raise ValueError("idle_hold_us must be >= 0")
        self.sim = sim
        self.topology = topology
        self.profile = profile
        self.port_sleep_mode = port_sleep_mode
        self.queue_threshold = queue_threshold
        self.buffer_packets = buffer_packets
        self.idle_hold_us = idle_hold_us
        self.flows: dict[int, Flow] = {}
        self._next_flow_id = 0
        self._next_msg_id = 0
        self.flows_completed = 0
        self.bytes_delivered = 0
        self.packets_delivered = 0
        self.packets_dropped = 0
        self.messages_delivered = 0
        # With the idle controller, traffic-free ports start asleep.
        if port_sleep_mode == "on_idle":
            for sw in topology.switches:
                for port in sw.ports:
                    port.state = PORT_LPI
                    port.ledger.state = PORT_LPI
                    sw.note_port_state(-1, 0)
        # Line cards: a card sleeps while every port on it sleeps. Each
        # card gets its own ledger so card energy integrates exactly.
        self.cards: list[tuple[list[Port], ResidencyLedger]] = []
        self._card_index: dict[int, int] = {}  # id(port) -> card position
        per_card = profile.ports_per_linecard
        for sw in topology.switches:
            size = per_card if per_card > 0 else max(1, len(sw.ports))
            for start in range(0, len(sw.ports), size):
                group = sw.ports[start:start + size]
                label = CARD_SLEEP if self._card_asleep(group) else CARD_ACTIVE
                ledger = ResidencyLedger(
                    f"{sw.name}/card{start // size}", label)
                for port in group:
                    self._card_index[id(port)] = len(self.cards)
                self.cards.append((group, ledger))

    # -- port state machine -------------------------------------------------

    @staticmethod
    def _card_asleep(ports: list[Port]) -> bool:
        return all(p.state in (PORT_LPI, PORT_OFF) and not p.in_transition
                   for p in ports)

    def _refresh_card(self, port: Port, now: SimTime) -> None:
        idx = self._card_index.get(id(port))
        if idx is None:
            return
        group, ledger = self.cards[idx]
        label = CARD_SLEEP if self._card_asleep(group) else CARD_ACTIVE
        if label != ledger.state:
            ledger.on_transition(label, now)

    def _begin_port_transition(self, port: Port, target: str,
                               latency_us: int) -> None:
        now = self.sim.now
        port.transitioning_to = target
        port.ledger.on_transition(transition_label(port.state, target), now)
        if port.state in (PORT_LPI, PORT_OFF) and port.switch is not None:
            # entering transition from deep sleep counts as waking up
            port.switch.note_port_state(+1, now)
        self._refresh_card(port, now)
        self.sim.schedule(now + latency_us, STATE_TRANSITION_COMPLETE,
                          self._complete_port_transition, port, target)

    def _complete_port_transition(self, port: Port, target: str) -> None:
        now = self.sim.now
        port.state = target
        port.transitioning_to = None
        port.ledger.on_transition(target, now)
        self._refresh_card(port, now)
        if target in (PORT_LPI, PORT_OFF):
            if port.switch is not None:
                port.switch.note_port_state(-1, now)
            if (port.wake_after or port.active_flows > 0
                    or len(port.queue) > self.queue_threshold):
                port.wake_after = False
                self._begin_port_transition(port, PORT_ACTIVE,
                                            self.profile.port_wake_us)
        else:  # PORT_ACTIVE reached
            port.wake_after = False
            self._on_port_awake(port)

    def _require_port(self, port: Port) -> bool:
        """Ensure a port is (or is becoming) active. True if already
        usable now, False if the caller must wait for the wake."""
        if not port.is_switch_port:
            return True
        if port.state == PORT_ACTIVE and not port.in_transition:
            return True
        if port.in_transition:
            if port.transitioning_to in (PORT_LPI, PORT_OFF):
                port.wake_after = True
            return False
        self._begin_port_transition(port, PORT_ACTIVE, self.profile.port_wake_us)
        return False

    def _port_idle(self, port: Port) -> bool:
        # Flow reservations pin a port awake outright; the configured
        # threshold applies to the packet queue only.
        if (self.port_sleep_mode != "on_idle" or not port.is_switch_port
                or port.in_transition or port.state != PORT_ACTIVE):
            return False
        if port.active_flows > 0 or port.serializing:
            return False
        return len(port.queue) <= self.queue_threshold

    def _maybe_sleep_port(self, port: Port) -> None:
        if not self._port_idle(port):
            return
        now = self.sim.now
        if self.idle_hold_us == 0:
            self._begin_port_transition(port, PORT_LPI,
                                        self.profile.port_sleep_us)
            return
        # Quiet-period check. A check that fires early (port was touched
        # since it was armed) re-arms for the new deadline; checks made
        # stale by new activity no-op via _port_idle.
        deadline = port.last_active_us + self.idle_hold_us
        if now >= deadline:
            self._begin_port_transition(port, PORT_LPI,
                                        self.profile.port_sleep_us)
        else:
            self.sim.schedule(deadline, PORT_IDLE_CHECK,
                              self._maybe_sleep_port, port)

    def _on_port_awake(self, port: Port) -> None:
        # waiting flows may now start; queued packets may serialize
        port.last_active_us = self.sim.now
        for flow in list(self.flows.values()):
            if flow.state == "waiting" and port in self._route_ports(flow):
                flow.blockers -= 1
                if flow.blockers == 0:
                    self._activate_flow(flow)
        self._try_serialize(port)

    # -- flow transport -------------------------------------------------------

    def _route_ports(self, flow: Flow) -> list[Port]:
        ports = []
        node: NodeRef = (SERVER, flow.src)
        for link in flow.route:
            ports.append(link.egress_port(node))
            node = link.other_end(node)
        return ports

    def start_flow(self, src: int, dst: int, size_bytes: int,
                   on_complete: Callable[[Flow], None],
                   flow_id: Optional[int] = None) -> Flow:
        """Begin a transfer. on_complete fires when the last byte lands.
        A zero-byte or same-server transfer completes immediately (next
        event dispatch)."""
        if flow_id is None:
            flow_id = self._next_flow_id
        self._next_flow_id = max(self._next_flow_id, flow_id) + 1
        now = self.sim.now
        route = self.topology.route(src, dst, flow_id) if src != dst else []
        flow = Flow(flow_id, src, dst, size_bytes, route, on_complete)
        flow.started_us = now
        self.flows[flow_id] = flow
        if not route:
            flow.state = "active"
            flow.completion_ev = self.sim.schedule(
                now, FLOW_COMPLETE, self._finish_flow, flow)
            return flow
        # Reserve every egress port up front so none of them can start
        # sleeping while the flow waits for the rest to wake.
        flow.blockers = 0
        for port in self._route_ports(flow):
            port.active_flows += 1
            port.last_active_us = now
            if not self._require_port(port):
                flow.blockers += 1
        if flow.blockers == 0:
            self._activate_flow(flow)
        return flow

    def _activate_flow(self, flow: Flow) -> None:
        flow.state = "active"
        flow.last_update_us = self.sim.now
        self._recompute_rates()

    def _recompute_rates(self) -> None:
        """Re-run progressive filling over active flows and reschedule
        every completion event whose rate changed."""
        now = self.sim.now
        active = [f for f in self.flows.values() if f.state == "active"
                  and f.route]
        if not active:
            return
        link_ids = {}
        for f in active:
            for link in f.route:
                link_ids[link.link_id] = link.rate_bps
        rates = max_min_rates(
            {f.flow_id: [l.link_id for l in f.route] for f in active},
            link_ids)
        for f in active:
            dt_us = now - f.last_update_us
            if dt_us > 0:
                f.remaining_bits -= f.rate_bps * dt_us / 1e6
            f.last_update_us = now
            new_rate = rates[f.flow_id]
            if new_rate != f.rate_bps or f.completion_ev is None:
                f.rate_bps = new_rate
                if f.completion_ev is not None:
                    self.sim.cancel(f.completion_ev)
                remaining_us = max(0, math.ceil(f.remaining_bits / new_rate * 1e6))
                f.completion_ev = self.sim.schedule(
                    now + remaining_us, FLOW_COMPLETE, self._finish_flow, f)

    def _finish_flow(self, flow: Flow) -> None:
        now = self.sim.now
        if flow.route:
            dt_us = now - flow.last_update_us
            flow.remaining_bits -= flow.rate_bps * dt_us / 1e6
            # Completion may not fire early; tolerance covers float noise only.
            if flow.remaining_bits > 1e-3:
                raise ConservationError(
                    f"flow {flow.flow_id} finished with "
                    f"{flow.remaining_bits:.3f} bits outstanding")
        flow.state = "done"
        flow.remaining_bits = 0.0
        flow.completion_ev = None
        del self.flows[flow.flow_id]
        self.flows_completed += 1
        self.bytes_delivered += flow.size_bytes
        if flow.route:
            for port in self._route_ports(flow):
                port.active_flows -= 1
                port.last_active_us = now
                self._maybe_sleep_port(port)
            self._recompute_rates()
        flow.on_complete(flow)

    # -- packet transport -----------------------------------------------------

    def send_packets(self, src: int, dst: int, size_bytes: int,
                     packet_bytes: int,
                     on_delivered: Callable[[int], None]) -> int:
        """Chunk a message into packets and inject them back-to-back.
        on_delivered(msg_id) fires once every packet has left the
        network, whether it arrived or was dropped at a full buffer.
        There is no retransmission; losses show up in packets_dropped,
        not as a transfer that never finishes."""
        if packet_bytes <= 0:
            raise ValueError("packet size must be positive")
        msg_id = self._next_msg_id
        self._next_msg_id += 1
        if src == dst or size_bytes == 0:
            self.sim.schedule(self.sim.now, PACKET_HOP,
                              self._deliver_message, msg_id, on_delivered)
            return msg_id
        route = self.topology.route(src, dst, msg_id)
        n_packets = max(1, math.ceil(size_bytes / packet_bytes))
        last_size = size_bytes - packet_bytes * (n_packets - 1)
        state = {"remaining": n_packets, "cb": on_delivered, "id": msg_id}
        node: NodeRef = (SERVER, src)
        first_port = route[0].egress_port(node)
        for i in range(n_packets):
            size = packet_bytes if i < n_packets - 1 else last_size
            packet = [state, size, 0, route]  # mutable hop index
            self._enqueue_packet(first_port, packet)
        return msg_id

    def _deliver_message(self, msg_id: int, cb: Callable[[int], None]) -> None:
        self.messages_delivered += 1
        cb(msg_id)

    def _enqueue_packet(self, port: Port, packet: list) -> None:
        # Switch buffers are bounded; the sending host paces itself, so
        # server egress queues never drop.
        if port.is_switch_port and len(port.queue) >= self.buffer_packets:
            port.drops += 1
            self.packets_dropped += 1
            state = packet[0]
            state["remaining"] -= 1
            if state["remaining"] == 0:
                self.sim.schedule(self.sim.now, PACKET_HOP,
                                  self._deliver_message, state["id"],
                                  state["cb"])
            return
        port.queue.append(packet)
        port.last_active_us = self.sim.now
        self._try_serialize(port)

    def _try_serialize(self, port: Port) -> None:
        if port.serializing or not port.queue:
            return
        if port.is_switch_port and not self._require_port(port):
            return
        packet = port.queue.popleft()
        port.serializing = True
        ser_us = max(1, math.ceil(packet[1] * 8 / port.link.rate_bps * 1e6))
        self.sim.schedule(self.sim.now + ser_us, PACKET_HOP,
                          self._packet_arrives, port, packet)

    def _packet_arrives(self, port: Port, packet: list) -> None:
        port.serializing = False
        port.last_active_us = self.sim.now
        state, size, hop, route = packet
        node = route[hop].other_end(port.owner)
        hop += 1
        if hop >= len(route):
            self.packets_delivered += 1
            state["remaining"] -= 1
            if state["remaining"] == 0:
                self.sim.schedule(self.sim.now, PACKET_HOP,
                                  self._deliver_message, state["id"], state["cb"])
        else:
            packet[2] = hop
            next_port = route[hop].egress_port(node)
            self._enqueue_packet(next_port, packet)
        self._maybe_sleep_port(port)
        self._try_serialize(port)

    # -- power / reporting ------------------------------------------------------

    def switch_power_w(self, switch: Switch) -> float:
        """Instantaneous chassis + line cards + ports draw."""
        total = self.profile.chassis_w
        for group, ledger in self.cards:
            if group and group[0].switch is switch:
                total += self.profile.card_power_of(ledger.state)
        for port in switch.ports:
            total += self.profile.port_power_of(port.ledger.state)
        return total

    def total_power_w(self) -> float:
        return sum(self.switch_power_w(sw) for sw in self.topology.switches)

    def awake_switch_count(self) -> int:
        return sum(1 for sw in self.topology.switches if sw.is_awake)

    def network_wake_cost(self, candidate_server: int) -> int:
        """How many currently sleeping switches the candidate's uplink
        path would have to wake."""
        ids = self.topology.uplink_switches(candidate_server)
        return sum(1 for i in ids if not self.topology.switches[i].is_awake)

    def finalize(self, now: SimTime) -> None:
        for sw in self.topology.switches:
            sw.chassis_ledger.finalize(now)
            sw.awake_ledger.finalize(now)
            for port in sw.ports:
                port.ledger.finalize(now)
        for _, ledger in self.cards:
            ledger.finalize(now)

    def register_energy(self, account) -> None:
        """Register chassis, card, and port ledgers under the network
        group of an EnergyAccount."""
        for sw in self.topology.switches:
            account.register("network", sw.chassis_ledger,
                             self.profile.chassis_power_of)
            for port in sw.ports:
                account.register("network", port.ledger,
                                 self.profile.port_power_of)
        for _, ledger in self.cards:
            account.register("network", ledger, self.profile.card_power_of)
