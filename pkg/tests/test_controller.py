import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdtaodv.controller import (
    ConnState,
    Controller,
    DiscoveryRound,
    append_self,
    assemble_topology,
    relay_discovery,
    return_route,
)
from sdtaodv.node import ForwardingNode, Mode, NodeParams, Send, Timer
from sdtaodv.sim import ScenarioConfig, Simulator
from sdtaodv.sim.channel import StaticChannel, connected_components
from sdtaodv.topology import TopologySnapshot, edge
from sdtaodv.trust import RouteScoreWeights
from sdtaodv.wire import NO_NODE, FlowMod, Hello, PacketIn, TopologyRequest, TRreq

from oracles import random_graph

# Drawn topology of the discovery walkthrough; RSU "1" is id 0, node k is id k-1.
DISCOVERY_EDGES = [(0, 1), (0, 2), (1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5)]


def sd_config(n, duration, **extra):
    over = {"traffic.flows": 0, "timers.hello_jitter": 0.0}
    over.update(extra)
    return ScenarioConfig(
        node_count=n, protocol="SDTAODV", sim_duration=duration, malicious_fraction=0.0, control_channel="inband"
    ).replace(**over)


def discovery_example_run():
    hold = 0.01
    # the direct RSU->3 copy lands inside node 3's hold window, just before node 2's copy
    lat = 0.1
    chan = StaticChannel(6, DISCOVERY_EDGES, latency=lat, per_edge={(0, 2): 2 * lat + hold / 2})
    cfg = sd_config(6, 12.0, **{"timers.discovery_hold": hold})
    sim = Simulator(cfg, channel=chan, flows=[], malicious=[], trace=True)
    return sim, sim.run()


def test_discovery_example_walkthrough():
    t0 = time.perf_counter()
    sim, res = discovery_example_run()
    pid = 2  # the second round, once every hello has been heard
    txs = [
        r for r in res.trace
        if r["ev"] == "tx" and r["msg"]["type"] == "TopologyRequest" and r["msg"]["packet_id"] == pid
    ]
    forwards = sorted((r["node"], r["to"]) for r in txs if r["relay_of"] is None and not r["route"] and r["to"] != 0)
    returns = [r for r in txs if r["relay_of"] is None and (r["route"] or r["to"] == 0)]
    # step 1: RSU to 2 and 3; node 2 only to 3, 4, 5; node 3 only to 6; nodes 4 and 5 to 6
    assert forwards == [(0, 1), (0, 2), (1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5)]
    by_node = {}
    for r in returns:
        by_node.setdefault(r["node"], []).append(r)
    assert sorted(by_node) == [2, 5]
    # node 3 returns the duplicate it got from node 2, back through node 2
    assert len(by_node[2]) == 1 and by_node[2][0]["to"] == 1
    # node 6 returns all three copies
    assert len(by_node[5]) == 3
    senders = sorted(r["msg"]["topology_list"][-2][0] for r in by_node[5])
    assert senders == [2, 3, 4]
    log = [e for e in res.controller_log if e["event"] == "topology" and e["packet_id"] == pid]
    assert log and log[0]["responses"] == 4
    assert time.perf_counter() - t0 < 1.0


def test_discovery_example_snapshot_equals_drawn_graph():
    sim, _ = discovery_example_run()
    snap = sim.nodes[0].controller.snapshot
    assert snap.nodes == set(range(6))
    assert snap.edge_pairs() == sorted(DISCOVERY_EDGES)


def test_discovery_example_relay_rules_directly():
    nbrs = {n: {m: 0.5 for m in sorted({b for a, b in DISCOVERY_EDGES if a == n} | {a for a, b in DISCOVERY_EDGES if b == n})} for n in range(6)}
    c = Controller(0)
    req, targets = c.start_discovery(0.0, nbrs[0])
    assert targets == [1, 2]
    dec = relay_discovery(1, nbrs[1], [(req, 0)])
    assert dec.forward_to == [2, 3, 4] and dec.returned == []
    at4 = relay_discovery(3, nbrs[3], [(dec.forwarded, 1)])
    assert at4.forward_to == [5]
    # node 6 holding copies from 3, 4 and 5 has nobody left to forward to
    c3 = append_self(req, 2, nbrs[2])
    c5 = append_self(dec.forwarded, 4, nbrs[4])
    at6 = relay_discovery(5, nbrs[5], [(c3, 2), (at4.forwarded, 3), (c5, 4)])
    assert at6.forward_to == [] and len(at6.returned) == 3
    assert all(r.topology_list[-1][0] == 5 for r in at6.returned)
    # a packet id seen in an earlier batch goes straight back
    again = relay_discovery(2, nbrs[2], [(dec.forwarded, 1)], seen_before=True)
    assert again.forward_to == [] and again.returned == [dec.forwarded]
    assert return_route(at6.returned[1], 5) == [3, 1, 0]


def test_isolated_controller_and_fresh_ids():
    c = Controller(0)
    r1, t1 = c.start_discovery(0.0, {})
    assert t1 == []
    snap = c.finish_discovery(2.0)
    assert snap.nodes == {0} and not snap.edges
    r2, _ = c.start_discovery(5.0, {})
    assert r2.packet_id != r1.packet_id
    assert c.finish_discovery(7.0).nodes == {0}


def test_assemble_is_set_union_and_deterministic():
    req = TopologyRequest(1, 0, ((0, 1, 0.9),), ((0, (1,)),))
    a = TopologyRequest(1, 0, ((0, 1, 0.9), (1, 2, 0.4)), ((0, (1,)), (1, (0, 2))))
    b = TopologyRequest(1, 0, ((0, 1, 0.9), (3, 4, 0.7)), ((0, (1,)), (3, (4,))))
    rnd = DiscoveryRound(1, 0.0, 2.0, req, [a, b])
    snap = assemble_topology(rnd)
    assert snap.edge_pairs() == [(0, 1), (1, 2), (3, 4)]
    assert snap.link_trust == {(0, 1): 0.9, (1, 2): 0.4, (3, 4): 0.7}
    again = assemble_topology(rnd)
    assert (again.nodes, again.edges, again.link_trust) == (snap.nodes, snap.edges, snap.link_trust)
    assert not DiscoveryRound(1, 0.0, 2.0, req).add(TopologyRequest(2, 0))


def test_snapshot_matches_ground_truth_on_random_static_graphs():
    rng = random.Random(99)
    for trial in range(100):
        n = rng.randint(3, 10)
        edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.35]
        chan = StaticChannel(n, edges, latency=0.02)
        cfg = sd_config(n, 4.5)
        sim = Simulator(cfg, channel=chan, flows=[], malicious=[])
        sim.run()
        snap = sim.nodes[0].controller.snapshot
        comp = next(c for c in connected_components(chan.adj) if 0 in c)
        truth = sorted((a, b) for a, b in edges if a in comp)
        assert snap.nodes == set(comp), trial
        assert snap.edge_pairs() == truth, trial
        for (u, v), t in snap.link_trust.items():
            assert 0.0 <= t <= 1.0 and edge(u, v) in snap.edges


def test_discovery_lists_never_repeat_nodes():
    rng = random.Random(5)
    for _ in range(20):
        n = rng.randint(4, 10)
        edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.5]
        sim = Simulator(sd_config(n, 4.5), channel=StaticChannel(n, edges, latency=0.02), flows=[], malicious=[], trace=True)
        res = sim.run()
        for r in res.trace:
            if r["ev"] == "tx" and r["msg"]["type"] == "TopologyRequest":
                ids = [x[0] for x in r["msg"]["topology_list"]]
                assert len(ids) == len(set(ids)) <= n


# -- path computation and flow programming ------------------------------------


def trust_example_controller():
    S, D = 0, 9
    edges = [(S, 1), (S, 6), (1, 4), (6, 4), (4, 7), (7, D)]
    trust = {(S, 1): 0.9, (S, 6): 0.7, (1, 4): 0.8, (6, 4): 0.8, (4, 7): 0.9, (7, D): 0.9}
    c = Controller(100, RouteScoreWeights(1.0, 0.0))
    c.snapshot = TopologySnapshot.from_edges(edges, trust, symmetric_trust=True)
    c.handle_hello(Hello(S), 0.0)
    return c


def test_packet_in_programs_trust_example_path():
    c = trust_example_controller()
    mods = c.handle_packet_in(PacketIn(0, TRreq(1, 0, 0, 1, 9, 0)), 0.5)
    assert [m.target for m in mods] == [9, 7, 4, 1, 0]
    fwd = {m.target: [e.action_next_hop for e in m.entries if e.match_dest == 9] for m in mods}
    assert fwd == {9: [], 7: [9], 4: [7], 1: [4], 0: [1]}
    back = {m.target: [e.action_next_hop for e in m.entries if e.match_dest == 0] for m in mods}
    assert back == {9: [7], 7: [4], 4: [1], 1: [0], 0: []}
    assert mods[-1].reply_to == 9 and all(m.reply_to == NO_NODE for m in mods[:-1])
    src_entry = [e for e in mods[-1].entries if e.match_dest == 9][0]
    assert src_entry.path_trust == pytest.approx(0.9 * 0.8 * 0.9 * 0.9)


def test_packet_in_idempotent():
    c = trust_example_controller()
    pin = PacketIn(0, TRreq(1, 0, 0, 1, 9, 0))
    a = c.handle_packet_in(pin, 0.5)
    flows = dict(c.flows)
    b = c.handle_packet_in(pin, 0.9)
    assert a == b and c.flows == flows


def test_packet_in_no_path():
    c = trust_example_controller()
    mods = c.handle_packet_in(PacketIn(0, TRreq(1, 0, 0, 1, 55, 0)), 0.5)
    assert all(m.entries == () for m in mods)
    assert mods == [FlowMod(0, (), 55)]
    assert (0, 55) not in c.flows


def test_packet_in_from_unknown_switch_ignored():
    c = trust_example_controller()
    assert c.handle_packet_in(PacketIn(4, TRreq(1, 0, 0, 1, 9, 0)), 0.5) == []


def test_hello_registry_lifecycle():
    c = Controller(0, hello_interval=1.0)
    resp = c.handle_hello(Hello(9), 0.0)
    assert resp == Hello(0) and c.registry.state(9) is ConnState.CONNECTED
    assert c.sweep(3.0) == []
    assert c.sweep(3.01) == [9]
    assert c.registry.state(9) is ConnState.STALE and 9 in c.needs_refresh
    c.refresh_flows(4.0)
    assert not c.needs_refresh
    c.handle_hello(Hello(9), 5.0)
    assert c.registry.state(9) is ConnState.CONNECTED


def test_stale_switch_on_path_gets_reprogrammed():
    c = trust_example_controller()
    for n in (1, 4, 7, 9):
        c.handle_hello(Hello(n), 0.0)
    c.handle_packet_in(PacketIn(0, TRreq(1, 0, 0, 1, 9, 0)), 0.5)
    c.sweep(10.0)
    mods = c.refresh_flows(10.0)
    assert {m.target for m in mods} == {0, 1, 4, 7, 9}


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]))
def test_flow_mods_form_simple_path(seed, ab):
    rng = random.Random(seed)
    snap = random_graph(rng)
    nodes = sorted(snap.nodes)
    src, dst = rng.sample(nodes, 2)
    c = Controller(src, RouteScoreWeights(*ab))
    c.snapshot = snap
    mods = c.handle_packet_in(PacketIn(src, TRreq(1, 0, src, 1, dst, 0)), 0.0)
    nxt = {}
    for m in mods:
        for e in m.entries:
            if e.match_dest == dst:
                assert m.target not in nxt
                nxt[m.target] = e.action_next_hop
    if not nxt:
        assert mods == [FlowMod(src, (), dst)]
        return
    walk, seen = [src], {src}
    while walk[-1] != dst:
        hop = nxt[walk[-1]]
        assert hop not in seen and snap.has_edge(walk[-1], hop)
        seen.add(hop)
        walk.append(hop)
    assert set(nxt) == set(walk[:-1])


def test_stale_switch_is_flagged_without_an_extra_round():
    n = ForwardingNode(0, Mode.SDTAODV_CONTROLLER, NodeParams())
    n.neighbors[1] = 3.0
    n.controller.handle_hello(Hello(5), 0.0)
    n.controller.handle_hello(Hello(6), 0.0)
    n.controller.handle_hello(Hello(6), 2.0)
    out = n.on_timer("ctrl_sweep", None, 3.5)
    assert [t.kind for t in out if isinstance(t, Timer)] == ["ctrl_sweep"]
    assert not [a for a in out if isinstance(a, Send)]
    assert 5 in n.controller.needs_refresh
    # the next periodic round still goes out on schedule
    out = n.on_timer("discovery", None, 5.0)
    assert [a.to for a in out if isinstance(a, Send) and isinstance(a.msg, TopologyRequest)] == [1]
