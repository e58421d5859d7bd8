import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdtaodv.node import (
    BROADCAST,
    Deliver,
    Drop,
    ForwardingNode,
    Frame,
    Mode,
    NodeParams,
    Send,
    Timer,
    ToController,
)
from sdtaodv.sim import ScenarioConfig, Simulator
from sdtaodv.sim.channel import StaticChannel
from sdtaodv.trust import RouteScoreWeights
from sdtaodv.wire import (
    DataPacket,
    FlowMod,
    FlowTableEntry,
    Hello,
    PacketIn,
    Rerr,
    TRrep,
    TRreq,
    decode,
    encode,
    quantize_trust,
)

# Example labels mapped onto ids: source=0, destination=9, relays keep their numbers.
S, D = 0, 9
TRUST_EDGES = [(S, 1), (S, 6), (1, 4), (6, 4), (4, 7), (7, D)]
# (observer, subject): observer's trust in subject, used when observer hears from subject
TRUST_MATRIX = {
    (1, S): 0.9, (6, S): 0.7, (4, 1): 0.8, (4, 6): 0.8, (7, 4): 0.9, (D, 7): 0.9,
    (S, 1): 0.9, (S, 6): 0.7, (1, 4): 0.8, (6, 4): 0.8, (4, 7): 0.9, (7, D): 0.9,
}


def trust_example_run(per_edge=None, protocol="TAODV", duration=8.0):
    cfg = ScenarioConfig(
        node_count=10,
        protocol=protocol,
        sim_duration=duration,
        malicious_fraction=0.0,
        alpha=1.0,
        beta=0.0,
        control_channel="ideal",
    ).replace(**{"traffic.start": 3.0, "traffic.interval": 1.0, "timers.hello_jitter": 0.0})
    sim = Simulator(
        cfg,
        channel=StaticChannel(10, TRUST_EDGES, latency=0.01, per_edge=per_edge),
        flows=[(S, D)],
        malicious=[],
        static_trust=TRUST_MATRIX,
        trace=True,
    )
    return sim, sim.run()


@pytest.mark.parametrize("slow_edge", [None, (1, 4)])
def test_trust_example_reverse_path_and_node4_choice(slow_edge):
    t0 = time.perf_counter()
    per_edge = {slow_edge: 0.05} if slow_edge else None
    sim, res = trust_example_run(per_edge)
    nodes = sim.nodes
    r4 = nodes[4].routes[S]
    assert r4.next_hop == 1
    assert quantize_trust(r4.path_trust) == quantize_trust(0.72)
    assert quantize_trust(r4.path_trust) != quantize_trust(0.56)
    # node 4's rebroadcast carries 0.72 on the wire
    sent = [r for r in res.trace if r["ev"] == "tx" and r["node"] == 4 and r["msg"]["type"] == "TRreq"]
    last = sent[-1]["msg"]
    wire_trust = decode(encode(TRreq(**{k: v for k, v in last.items() if k != "type"}))).packet_trust
    assert wire_trust == quantize_trust(0.72)
    # reverse path destination -> 7 -> 4 -> 1 -> source
    hop, walk = D, [D]
    while hop != S:
        hop = nodes[hop].routes[S].next_hop
        walk.append(hop)
    assert walk == [D, 7, 4, 1, S]
    # forward routes installed by the reply at 1, 4 and 7
    assert [nodes[n].routes[D].next_hop for n in (S, 1, 4, 7)] == [1, 4, 7, D]
    assert res.metrics.delivered == res.metrics.generated
    assert time.perf_counter() - t0 < 1.0


def test_trust_example_node4_drops_worse_copy():
    sim, res = trust_example_run()
    assert sim.nodes[4].counters["rreq_dup_dropped"] >= 1


def test_trust_example_late_better_copy_replaces_route():
    sim, res = trust_example_run({(1, 4): 0.05})
    # the 0.56 copy arrived first, the 0.72 copy then won and was re-broadcast
    assert sim.nodes[4].routes[S].next_hop == 1
    sent = [r["msg"]["packet_trust"] for r in res.trace if r["ev"] == "tx" and r["node"] == 4 and r["msg"]["type"] == "TRreq"]
    assert [quantize_trust(v) for v in sent] == [quantize_trust(0.56), quantize_trust(0.72)]


# -- direct state-machine tests ----------------------------------------------


def taodv(node_id, trust=None, mode=Mode.TAODV, **params):
    n = ForwardingNode(node_id, mode, NodeParams(**params))
    n.static_trust = dict(trust or {})
    return n


def sends(actions, kind=None):
    return [a for a in actions if isinstance(a, Send) and (kind is None or isinstance(a.msg, kind))]


def test_duplicate_with_equal_trust_dropped():
    n = taodv(4, {1: 0.8, 6: 0.8})
    req = TRreq(1, 1, S, 1, D, 0, 0.9)
    assert sends(n.receive(Frame(1, 1, req), 0.0), TRreq)
    assert n.receive(Frame(2, 6, req), 0.0) == []
    assert n.counters["rreq_dup_dropped"] == 1


def test_rebroadcast_overwrites_trust_and_hops():
    n = taodv(1, {S: 0.9})
    out = sends(n.receive(Frame(1, S, TRreq(1, 0, S, 1, D, 0, 1.0)), 0.0), TRreq)
    assert len(out) == 1 and out[0].to == BROADCAST
    assert out[0].msg.packet_trust == pytest.approx(0.9) and out[0].msg.hop_count == 1


def test_destination_replies_with_full_trust():
    n = taodv(D, {7: 0.9})
    out = sends(n.receive(Frame(1, 7, TRreq(1, 3, S, 1, D, 0, 0.6)), 0.0), TRrep)
    assert len(out) == 1
    rep = out[0].msg
    assert out[0].to == 7
    assert rep.packet_trust == 1.0 and rep.lifetime == NodeParams().rrep_lifetime
    assert (rep.source_addr, rep.dest_addr) == (S, D)


def test_trrep_without_reverse_route_counts_failure():
    n = taodv(4, {7: 0.9})
    out = n.receive(Frame(1, 7, TRrep(1, S, 1, D, 1, 1.0, 6.0)), 0.0)
    assert sends(out) == []
    assert n.counters["routing_failure"] == 1
    assert n.routes[D].next_hop == 7  # forward route still learned


def test_source_flushes_buffer_fifo_on_reply():
    n = taodv(S, {1: 0.9})
    n.neighbors[1] = 0.0
    first = n.originate(DataPacket(S, D, 1, 100, 0.0), 0.0)
    assert len(sends(first, TRreq)) == 1
    for seq in range(2, 6):
        assert sends(n.originate(DataPacket(S, D, seq, 100, 0.0), 0.1), TRreq) == []
    assert [p.seq for p in n.buffer] == [1, 2, 3, 4, 5]
    out = n.receive(Frame(9, 1, TRrep(3, S, n.seq, D, 1, 1.0, 6.0)), 0.5)
    data = sends(out, DataPacket)
    assert [s.msg.seq for s in data] == [1, 2, 3, 4, 5]
    assert all(s.to == 1 for s in data)
    assert not n.buffer and D not in n.pending


def test_one_rreq_per_discovery_window_then_retry():
    n = taodv(S)
    out = n.originate(DataPacket(S, D, 1, 10, 0.0), 0.0)
    timers = [a for a in out if isinstance(a, Timer)]
    assert len(sends(out, TRreq)) == 1 and timers[0].kind == "discovery_timeout"
    assert sends(n.originate(DataPacket(S, D, 2, 10, 0.2), 0.2), TRreq) == []
    retry = n.on_timer("discovery_timeout", timers[0].key, 1.0)
    assert len(sends(retry, TRreq)) == 1
    assert [a for a in retry if isinstance(a, Timer)][0].delay == 2.0


def test_buffer_overflow_drops_oldest():
    n = taodv(S)
    for seq in range(1, 65):
        n.originate(DataPacket(S, D, seq, 10, 0.0), 0.0)
    assert len(n.buffer) == 64
    out = n.originate(DataPacket(S, D, 65, 10, 0.0), 0.0)
    drops = [a for a in out if isinstance(a, Drop)]
    assert [(d.packet.seq, d.reason) for d in drops] == [(1, "buffer_overflow")]
    assert n.counters["buffer_overflow"] == 1
    assert n.buffer[0].seq == 2 and n.buffer[-1].seq == 65


def test_neighbor_timeout_invalidates_routes_and_sends_rerr():
    n = taodv(4)
    n.neighbors = {7: 0.0, 1: 2.5}
    n.update_route(D, 7, 2, 5, 0.8, 100.0, 0.0)
    n.update_route(S, 1, 2, 3, 0.7, 100.0, 0.0)
    assert n.check_neighbors(3.0) == []
    out = n.check_neighbors(3.01)
    assert 7 not in n.neighbors and 1 in n.neighbors
    assert not n.routes[D].valid and n.routes[S].valid
    rerrs = sends(out, Rerr)
    assert len(rerrs) == 1 and rerrs[0].msg.unreachable == ((D, 6),)


def test_rerr_propagates_only_for_routes_via_sender():
    n = taodv(1)
    n.update_route(D, 4, 2, 5, 0.8, 100.0, 0.0)
    n.update_route(7, 6, 2, 5, 0.8, 100.0, 0.0)
    out = n.receive(Frame(1, 4, Rerr(((D, 6), (7, 6)))), 1.0)
    assert not n.routes[D].valid and n.routes[7].valid
    assert sends(out, Rerr)[0].msg.unreachable == ((D, 6),)


def test_hello_refreshes_neighbor():
    n = taodv(2)
    assert n.receive(Frame(1, 5, Hello(5)), 4.0) == []
    assert n.neighbors[5] == 4.0
    acts = n.emit_hello(4.0)
    assert sends(acts, Hello)[0].to == BROADCAST


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.floats(0.0, 1.0)), min_size=1, max_size=30))
def test_rebroadcasts_bounded_per_request(copies):
    n = taodv(9, {s: 1.0 for s in range(1, 7)}, rebroadcast_cap=3)
    total = 0
    for i, (sender, t) in enumerate(copies):
        total += len(sends(n.receive(Frame(i, sender, TRreq(1, 1, S, 1, 50, 0, t)), 0.0), TRreq))
    assert total <= 3
    assert n.rreq_cache[(S, 1)].rebroadcasts <= 3


def test_aodv_mode_first_copy_wins():
    n = taodv(4, mode=Mode.AODV)
    sends(n.receive(Frame(1, 6, TRreq(1, 1, S, 1, D, 0, 1.0)), 0.0))
    assert n.receive(Frame(2, 1, TRreq(1, 1, S, 1, D, 0, 1.0)), 0.0) == []
    assert n.routes[S].next_hop == 6


def test_malicious_node_drops_transit_data_only():
    n = taodv(4)
    n.malicious = True
    n.p = NodeParams(p_drop=1.0)
    n.update_route(D, 7, 1, 1, 1.0, 100.0, 0.0)
    out = n.receive(Frame(1, 1, DataPacket(S, D, 1, 10)), 0.0)
    assert [a.reason for a in out if isinstance(a, Drop)] == ["malicious"]
    # control still forwarded
    assert sends(n.receive(Frame(2, 1, TRreq(1, 1, S, 1, 30, 0, 1.0)), 0.0), TRreq)
    # its own traffic is sent
    assert sends(n.originate(DataPacket(4, D, 1, 10), 0.0), DataPacket)


# -- SD-TAODV switch -----------------------------------------------------------


def switch(node_id=3, connected_at=0.0):
    n = ForwardingNode(node_id, Mode.SDTAODV_SWITCH, NodeParams(), controller_id=0)
    n.last_controller_contact = connected_at
    return n


def test_switch_escalates_control():
    n = switch()
    out = n.receive(Frame(1, 2, TRreq(1, 0, S, 1, D, 0, 1.0)), 0.1)
    assert out == [ToController(PacketIn(3, TRreq(1, 0, S, 1, D, 0, 1.0)))]
    out = n.receive(Frame(2, 2, TRrep(0, S, 1, D, 1, 1.0, 6.0)), 0.1)
    assert isinstance(out[0], ToController) and isinstance(out[0].msg.payload, TRrep)
    assert n.routes == {}


def test_controller_hello_response_connects():
    n = switch(connected_at=None)
    assert not n.connected
    n.receive(Frame(1, 0, Hello(0), southbound=True), 5.0)
    assert n.connected and n._connected_at(7.0) and not n._connected_at(8.5)


def test_flow_mod_flushes_buffer_without_second_packet_in():
    n = switch(3)
    n.neighbors[4] = 0.0
    out = n.originate(DataPacket(3, D, 1, 10), 0.1)
    assert sum(isinstance(a, ToController) for a in out) == 1
    n.originate(DataPacket(3, D, 2, 10), 0.2)
    out = n.receive(Frame(5, 0, FlowMod(3, (FlowTableEntry(D, 4, 0.8, 10.0),), D), southbound=True), 0.3)
    assert [s.msg.seq for s in sends(out, DataPacket)] == [1, 2]
    assert not any(isinstance(a, ToController) for a in out)
    out = n.originate(DataPacket(3, D, 3, 10), 0.4)
    assert sends(out, DataPacket)[0].to == 4


def test_flow_hit_refreshes_idle_timer_and_replacement_applies():
    n = switch(3)
    n.neighbors.update({4: 0.0, 5: 0.0})
    n.apply_flow_mod(FlowMod(3, (FlowTableEntry(D, 4, 0.8, 2.0),)), 0.0)
    assert sends(n.originate(DataPacket(3, D, 1, 10), 1.5), DataPacket)[0].to == 4
    assert n.flow_table[D].last_used == 1.5
    n.apply_flow_mod(FlowMod(3, (FlowTableEntry(D, 5, 0.9, 2.0),)), 1.6)
    assert sends(n.originate(DataPacket(3, D, 2, 10), 1.7), DataPacket)[0].to == 5


def test_idle_flow_evicted_then_packet_in():
    n = switch(3)
    n.neighbors[4] = 0.0
    n.apply_flow_mod(FlowMod(3, (FlowTableEntry(D, 4, 0.8, 2.0),)), 0.0)
    out = n.originate(DataPacket(3, D, 1, 10), 2.5)
    assert D not in n.flow_table
    assert n.counters["flow_idle_evicted"] == 1
    assert any(isinstance(a, ToController) and isinstance(a.msg, PacketIn) for a in out)


def test_flow_mod_ignored_when_not_connected():
    n = switch(3, connected_at=None)
    n.apply_flow_mod(FlowMod(3, (FlowTableEntry(D, 4),)), 0.0)
    assert n.flow_table == {}
    assert n.counters["flowmod_not_connected"] == 1


def test_negative_reply_drops_buffered():
    n = switch(3)
    n.originate(DataPacket(3, D, 1, 10), 0.0)
    out = n.apply_flow_mod(FlowMod(3, (), D), 0.1)
    assert [(a.packet.seq, a.reason) for a in out if isinstance(a, Drop)] == [(1, "no_route")]
    assert D not in n.pending


def test_route_weights_applied_in_node():
    hop_only = taodv(4, weights=RouteScoreWeights(0.0, 1.0))
    hop_only.update_route(S, 6, 4, 1, 0.9, 10.0, 0.0)
    assert hop_only.update_route(S, 1, 2, 1, 0.1, 10.0, 0.0)
    assert hop_only.routes[S].next_hop == 1
    trust_only = taodv(4)
    trust_only.update_route(S, 6, 4, 1, 0.9, 10.0, 0.0)
    assert not trust_only.update_route(S, 1, 2, 1, 0.1, 10.0, 0.0)
    # a fresher sequence number wins regardless of score
    assert trust_only.update_route(S, 1, 2, 2, 0.1, 10.0, 0.0)


def test_duplicate_rreq_needs_strict_trust_gain_even_with_hop_weights():
    n = taodv(4, {1: 0.8, 6: 0.8}, weights=RouteScoreWeights(0.0, 1.0))
    n.receive(Frame(1, 6, TRreq(1, 3, S, 1, D, 0, 1.0)), 0.0)
    assert n.receive(Frame(2, 1, TRreq(1, 1, S, 1, D, 0, 0.2)), 0.0) == []
    assert n.routes[S].next_hop == 6


def test_deliver_at_destination():
    n = taodv(D)
    assert n.receive(Frame(1, 7, DataPacket(S, D, 1, 10)), 0.0) == [Deliver(DataPacket(S, D, 1, 10))]
