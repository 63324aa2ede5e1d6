"""Fabric transport and port power: timing oracles computed by hand.

Serialization of a 1500-byte packet on a 1 Gb/s link takes
ceil(1500*8/1e9 * 1e6) = 12 us, so a two-hop path delivers at 24 us.
A 1 MB flow alone on a 1 Gb/s path drains in exactly 8000 us. All flow
sharing scenarios below are solved on paper with progressive filling
first; the independent reference implementation doubles as the
allocator cross-check.
"""

import pytest
from hypothesis import given, settings, strategies as st

from dcsim.config import SwitchPowerConfig
from dcsim.engine import Simulator
from dcsim.network import (
    NetworkFabric,
    PORT_ACTIVE,
    PORT_LPI,
    build_star,
    build_topology,
    max_min_rates,
)


def make_fabric(sim, n_servers=2, rate_bps=1e9, **kw):
    topo = build_star(n_servers, rate_bps)
    profile = SwitchPowerConfig().to_profile()
    return NetworkFabric(sim, topo, profile, **kw), topo


# --- packet transport --------------------------------------------------------

def test_single_packet_two_hop_timing():
    sim = Simulator()
    fabric, _ = make_fabric(sim)
    delivered = []
    fabric.send_packets(0, 1, 1500, 1500, lambda mid: delivered.append(sim.now))
    sim.run(max_events=100)
    assert delivered == [24]  # 12 us per hop, 2 hops
    assert fabric.packets_delivered == 1
    assert fabric.messages_delivered == 1
    assert fabric.packets_dropped == 0


def test_message_chunking_and_tail_packet():
    # 3100 bytes at 1500 B/packet -> 1500, 1500, 100. The store-and-
    # forward pipeline on two equal links delivers the tail at
    # 12+12+12 (first three serializations back to back on hop one)
    # overlapped with hop two; worked through by hand: arrivals at hub
    # at 12, 24, 25; deliveries at 24, 36, 37.
    sim = Simulator()
    fabric, _ = make_fabric(sim)
    done = []
    fabric.send_packets(0, 1, 3100, 1500, lambda mid: done.append(sim.now))
    sim.run(max_events=1_000)
    assert fabric.packets_delivered == 3
    assert done == [37]


def test_same_server_and_empty_message_complete_immediately():
    sim = Simulator()
    fabric, _ = make_fabric(sim)
    done = []
    fabric.send_packets(0, 0, 10_000, 1500, done.append)
    fabric.send_packets(0, 1, 0, 1500, done.append)
    sim.run(max_events=10)
    assert len(done) == 2
    assert fabric.packets_delivered == 0  # nothing crossed the wire


def test_bounded_buffer_drops_but_message_completes():
    # Two senders converge on the hub's single egress to server 2 at
    # twice its drain rate; with a 4-packet buffer some must drop.
    sim = Simulator()
    fabric, _ = make_fabric(sim, n_servers=3, buffer_packets=4)
    done = []
    fabric.send_packets(0, 2, 30_000, 1500, done.append)  # 20 packets
    fabric.send_packets(1, 2, 30_000, 1500, done.append)
    sim.run(max_events=100_000)
    assert len(done) == 2  # both messages complete despite losses
    assert fabric.packets_dropped > 0
    assert fabric.packets_delivered + fabric.packets_dropped == 40
    with pytest.raises(ValueError):
        fabric.send_packets(0, 1, 100, 0, lambda m: None)


# --- flow transport ----------------------------------------------------------

def test_flow_solo_completion_time():
    sim = Simulator()
    fabric, _ = make_fabric(sim)
    done = []
    fabric.start_flow(0, 1, 1_000_000, lambda f: done.append(sim.now))
    sim.run(max_events=100)
    assert done == [8_000]  # 8 Mbit / 1 Gb/s
    assert fabric.bytes_delivered == 1_000_000


def test_flow_sharing_staggered_hand_solved():
    # A (1 Mbit) starts at 0; B (1 Mbit) joins the same path at 500 us.
    # Equal split from 500 on: A finishes at 1500, B at 2000.
    sim = Simulator()
    fabric, _ = make_fabric(sim)
    finished = {}
    fabric.start_flow(0, 1, 125_000, lambda f: finished.setdefault("a", sim.now))
    sim.run_until(500)
    fabric.start_flow(0, 1, 125_000, lambda f: finished.setdefault("b", sim.now))
    sim.run(max_events=1_000)
    assert finished == {"a": 1_500, "b": 2_000}


def test_flow_conservation_exact_bytes():
    sim = Simulator()
    fabric, _ = make_fabric(sim, n_servers=4)
    leftovers = []
    sizes = [10_000, 250_000, 1_000_000, 77]
    for i, size in enumerate(sizes):
        fabric.start_flow(i % 3, 3, size,
                          lambda f: leftovers.append(f.remaining_bits))
    sim.run(max_events=10_000)
    assert fabric.flows_completed == len(sizes)
    assert fabric.bytes_delivered == sum(sizes)
    assert all(bits == 0.0 for bits in leftovers)


def test_zero_byte_flow_completes_next_dispatch():
    sim = Simulator()
    fabric, _ = make_fabric(sim)
    done = []
    fabric.start_flow(0, 1, 0, lambda f: done.append(sim.now))
    fabric.start_flow(1, 1, 5_000, lambda f: done.append(sim.now))  # same server
    sim.run(max_events=10)
    assert done == [0, 0]
    assert fabric.flows_completed == 2


# --- port sleep controller -----------------------------------------------------

def test_on_idle_ports_start_asleep_and_wake_costs_latency():
    sim = Simulator()
    fabric, topo = make_fabric(sim, port_sleep_mode="on_idle")
    assert fabric.awake_switch_count() == 0
    assert fabric.network_wake_cost(0) == 1
    done = []
    fabric.send_packets(0, 1, 1500, 1500, lambda mid: done.append(sim.now))
    sim.run(max_events=1_000)
    # hub egress was in LPI: packet waits out the 100 us port wake
    # (arrives hub at 12, serializes 112..124)
    assert done == [124]
    assert fabric.awake_switch_count() == 0  # drained, back asleep


def test_never_mode_ports_stay_active():
    sim = Simulator()
    fabric, topo = make_fabric(sim, port_sleep_mode="never")
    assert fabric.awake_switch_count() == 1
    done = []
    fabric.send_packets(0, 1, 1500, 1500, lambda mid: done.append(sim.now))
    sim.run(max_events=1_000)
    assert done == [24]
    hub = topo.switches[0]
    assert all(p.state == PORT_ACTIVE for p in hub.ports)


def test_flow_waits_for_port_wake_then_runs_at_full_rate():
    sim = Simulator()
    fabric, _ = make_fabric(sim, port_sleep_mode="on_idle")
    done = []
    fabric.start_flow(0, 1, 1_000_000, lambda f: done.append(sim.now))
    sim.run(max_events=1_000)
    assert done == [100 + 8_000]


def test_idle_hold_defers_sleep_and_retouch_rearms():
    sim = Simulator()
    fabric, topo = make_fabric(sim, port_sleep_mode="on_idle",
                               idle_hold_us=500)
    hub_ports = topo.switches[0].ports
    fabric.send_packets(0, 1, 1500, 1500, lambda mid: None)
    sim.run_until(130)  # delivery at 124; hold window runs to 624
    egress = next(p for p in hub_ports if p.state == PORT_ACTIVE)
    sim.run_until(600)
    assert egress.state == PORT_ACTIVE  # still inside the hold window
    # second message lands before the deadline and re-arms the hold
    fabric.send_packets(0, 1, 1500, 1500, lambda mid: None)
    sim.run_until(660)
    assert egress.state == PORT_ACTIVE
    sim.run_until(2_000)
    assert egress.state == PORT_LPI  # quiet for a full window, slept
    with pytest.raises(ValueError):
        make_fabric(Simulator(), port_sleep_mode="on_idle", idle_hold_us=-1)
    with pytest.raises(ValueError):
        make_fabric(Simulator(), port_sleep_mode="sometimes")


def test_port_residency_and_energy_conservation():
    sim = Simulator()
    fabric, topo = make_fabric(sim, port_sleep_mode="on_idle")
    fabric.send_packets(0, 1, 4_500, 1500, lambda mid: None)
    sim.run(max_events=10_000)
    sim.run_until(50_000)
    fabric.finalize(50_000)
    for sw in topo.switches:
        assert sw.chassis_ledger.total_us() == 50_000
        for port in sw.ports:
            assert port.ledger.total_us() == 50_000
    from dcsim.stats import EnergyAccount
    acct = EnergyAccount()
    fabric.register_energy(acct)
    total = acct.total_energy_j()
    assert total == acct.group_energy_j("network") > 0
    assert acct.group_energy_j("server") == 0.0


def test_instantaneous_switch_power_hand_sum():
    sim = Simulator()
    fabric, topo = make_fabric(sim, n_servers=4)  # never mode: all active
    # chassis 14.7 + 4 ports x 0.23 = 15.62 W
    assert fabric.switch_power_w(topo.switches[0]) == pytest.approx(15.62)
    assert fabric.total_power_w() == pytest.approx(15.62)


# --- max-min allocator ---------------------------------------------------------

def reference_max_min(flow_links, capacities):
    """Textbook water-filling, written independently of the shipped
    allocator: rates grow together; each round the tightest link
    freezes its surviving flows at the fair share computed from scratch
    (capacity minus frozen usage, divided by live flow count)."""
    frozen = {}
    while True:
        live_by_link = {}
        for fid, links in flow_links.items():
            if fid in frozen:
                continue
            for l in links:
                live_by_link.setdefault(l, []).append(fid)
        if not live_by_link:
            break
        best = None
        for l in sorted(live_by_link):
            used = sum(frozen[f] for f in flow_links_by_link(flow_links, l)
                       if f in frozen)
            share = (capacities[l] - used) / len(live_by_link[l])
            if best is None or share < best[0]:
                best = (share, l)
        share, link = best
        for fid in live_by_link[link]:
            frozen[fid] = share
    return frozen


def flow_links_by_link(flow_links, link_id):
    return [fid for fid, links in flow_links.items() if link_id in links]


def test_max_min_pinned_cases():
    # One bottleneck, two flows: even split.
    assert max_min_rates({0: [0], 1: [0]}, {0: 10.0}) == {0: 5.0, 1: 5.0}
    # Classic three-flow chain: flow 2 crosses both links. Links of
    # capacity 10 and 4: flow on link 1 pair freezes at 2 first, then
    # flow 0 takes the slack on link 0.
    rates = max_min_rates({0: [0], 1: [1], 2: [0, 1]},
                          {0: 10.0, 1: 4.0})
    assert rates == {1: 2.0, 2: 2.0, 0: 8.0}
    # Empty route is rejected.
    with pytest.raises(ValueError):
        max_min_rates({0: []}, {0: 1.0})


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_max_min_matches_reference_and_is_feasible(data):
    n_links = data.draw(st.integers(min_value=1, max_value=5))
    n_flows = data.draw(st.integers(min_value=1, max_value=6))
    capacities = {l: data.draw(st.floats(min_value=1e6, max_value=1e10))
                  for l in range(n_links)}
    flow_links = {}
    for f in range(n_flows):
        flow_links[f] = data.draw(
            st.lists(st.integers(0, n_links - 1), min_size=1,
                     max_size=n_links, unique=True))
    got = max_min_rates(flow_links, capacities)
    want = reference_max_min(flow_links, capacities)
    assert set(got) == set(want)
    for fid in got:
        assert got[fid] == pytest.approx(want[fid], abs=1.0)  # 1 bit/s
    # feasibility: no link oversubscribed (beyond float slack)
    for l, cap in capacities.items():
        load = sum(got[f] for f, links in flow_links.items() if l in links)
        assert load <= cap * (1 + 1e-9) + 1.0
    # max-min certificate: every flow crosses some saturated link
    for fid, links in flow_links.items():
        saturated = False
        for l in links:
            load = sum(got[f] for f, ls in flow_links.items() if l in ls)
            if load >= capacities[l] * (1 - 1e-6) - 1.0:
                saturated = True
        assert saturated
