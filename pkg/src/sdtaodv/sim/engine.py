"""Discrete-event engine tying nodes, channel, traffic, adversaries and metrics together."""

from __future__ import annotations

import heapq
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..node import (
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
    ToSwitch,
)
from ..trust import PacketClass, RouteScoreWeights
from ..wire import DataPacket, TRrep, encoded_size, to_record
from .channel import RadioChannel, StaticChannel
from .config import InvalidConfig, ScenarioConfig
from .metrics import MetricsRecord, Sample
from .mobility import RandomWaypoint
from .rng import stream

CONTROLLER = 0

EV_RX, EV_TIMER, EV_TICK, EV_SAMPLE, EV_GEN, EV_SOUTH = range(6)


class TooManyMalicious(InvalidConfig):
    pass


@dataclass
class Flow:
    src: int
    dst: int
    seq: int = 0


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: MetricsRecord
    trace: List[dict] = field(default_factory=list)
    flows: List[Tuple[int, int]] = field(default_factory=list)
    malicious: List[int] = field(default_factory=list)
    controller_log: List[dict] = field(default_factory=list)

    def trace_lines(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.trace)


def choose_flows(rng: random.Random, n: int, count: int) -> List[Tuple[int, int]]:
    """Flow endpoints among nodes 1..n-1; node 0 is the roadside unit."""
    cands = list(range(1, n))
    if count == 0:
        return []
    if len(cands) < 2:
        raise InvalidConfig(["traffic.flows: need at least two non-RSU nodes for a flow"])
    if len(cands) >= 2 * count:
        picks = rng.sample(cands, 2 * count)
        return [(picks[2 * i], picks[2 * i + 1]) for i in range(count)]
    return [tuple(rng.sample(cands, 2)) for _ in range(count)]


def inject_adversaries(cfg: ScenarioConfig, rng: random.Random, protected: Sequence[int]) -> List[int]:
    """Seeded uniform choice of malicious nodes outside the protected roles."""
    count = cfg.malicious_count()
    if count >= cfg.node_count / 2:
        raise TooManyMalicious([f"malicious_fraction: {count} malicious of {cfg.node_count} nodes is not a minority"])
    keep = set(protected) | {CONTROLLER}
    cands = [i for i in range(cfg.node_count) if i not in keep]
    if count > len(cands):
        raise TooManyMalicious([f"malicious_fraction: {count} malicious but only {len(cands)} eligible nodes"])
    return sorted(rng.sample(cands, count))


def node_params(cfg: ScenarioConfig) -> NodeParams:
    tm, tr = cfg.timers, cfg.trust
    return NodeParams(
        hello_interval=tm.hello_interval,
        allowed_hello_loss=tm.allowed_hello_loss,
        active_route_timeout=tm.active_route_timeout,
        rrep_lifetime=tm.rrep_lifetime,
        rebroadcast_cap=tm.rebroadcast_cap,
        buffer_capacity=tm.buffer_capacity,
        discovery_timeout=tm.discovery_timeout,
        discovery_retries=tm.discovery_retries,
        flow_idle_timeout=tm.flow_idle_timeout,
        controller_hello_interval=tm.controller_hello_interval,
        discovery_period=tm.discovery_period,
        discovery_deadline=tm.discovery_deadline,
        discovery_hold=tm.discovery_hold,
        weights=RouteScoreWeights(cfg.alpha, cfg.beta, cfg.max_hops),
        omega=(tr.omega1, tr.omega2),
        trust_window=tr.window,
        trust_buckets=tr.buckets,
        default_trust=tr.default,
        trust_observation=tr.observation,
        p_drop=cfg.p_drop,
    )


def _expects_forward(msg, to: int, route) -> Optional[PacketClass]:
    """Packet class if the receiver of this unicast is supposed to pass it on."""
    if route:
        return PacketClass.CONTROL
    if isinstance(msg, DataPacket):
        return PacketClass.DATA if msg.dst != to else None
    if isinstance(msg, TRrep):
        return PacketClass.CONTROL if msg.source_addr != to else None
    return None


class Simulator:
    """One deterministic run of a scenario.

    ``channel``, ``flows``, ``malicious`` and ``static_trust`` override the
    seeded defaults, which is how the hand-built golden scenarios are wired.
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        channel=None,
        flows: Optional[Sequence[Tuple[int, int]]] = None,
        malicious: Optional[Sequence[int]] = None,
        static_trust: Optional[Dict[Tuple[int, int], float]] = None,
        trace: bool = False,
        audit: bool = False,
    ):
        self.cfg = cfg.validate()
        n = cfg.node_count
        seed = cfg.seed
        self.trace_on = trace
        self.audit = audit
        self.trace: List[dict] = []
        self.observations: List[list] = []

        if channel is None:
            mob = RandomWaypoint(
                n,
                cfg.area,
                cfg.mobility.speed_min,
                cfg.mobility.speed_max,
                cfg.mobility.pause,
                stream(seed, "mobility"),
                fixed={CONTROLLER: (cfg.area[0] / 2, cfg.area[1] / 2)},
            )
            channel = RadioChannel(
                n,
                cfg.data_rate,
                cfg.radio_range,
                cfg.link,
                mob,
                stream(seed, "channel"),
                stream(seed, "mac"),
                cfg.mobility.tick,
            )
        self.channel = channel

        traffic_rng = stream(seed, "traffic")
        pairs = list(flows) if flows is not None else choose_flows(traffic_rng, n, cfg.traffic.flows)
        self.flows = [Flow(s, d) for s, d in pairs]
        ends = {x for p in pairs for x in p}
        if malicious is None:
            malicious = inject_adversaries(cfg, stream(seed, "adversary"), sorted(ends))
        self.malicious = sorted(malicious)
        self._traffic_rng = traffic_rng
        self._jitter_rng = stream(seed, "jitter")

        params = node_params(cfg)
        sd = cfg.protocol == "SDTAODV"
        self.sd = sd
        self.nodes: List[ForwardingNode] = []
        bad = set(self.malicious)
        for i in range(n):
            if sd:
                mode = Mode.SDTAODV_CONTROLLER if i == CONTROLLER else Mode.SDTAODV_SWITCH
            else:
                mode = Mode(cfg.protocol)
            node = ForwardingNode(
                i,
                mode,
                params,
                malicious=i in bad,
                rng=stream(seed, f"drop:{i}"),
                controller_id=CONTROLLER if sd else None,
            )
            self.nodes.append(node)
        if static_trust is not None:
            for node in self.nodes:
                node.static_trust = {}
            for (u, v), t in static_trust.items():
                self.nodes[u].static_trust[v] = t
        self.observe = cfg.protocol != "AODV" and cfg.trust.observation and static_trust is None

        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._uid = 0
        self._watch: Dict[int, list] = {}
        self.in_transit = 0
        active = max(cfg.sim_duration - cfg.traffic.start, 0.0)
        self.metrics = MetricsRecord(cfg.sim_duration, active)
        self._sample_bytes = 0
        self.control_dropped: Counter = Counter()

    # -- queue -----------------------------------------------------------

    def _push(self, t: float, kind: int, a, b=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, a, b))

    def _log(self, **rec) -> None:
        self.trace.append(rec)

    # -- actions ---------------------------------------------------------

    def _apply(self, u: int, actions) -> None:
        for act in actions:
            cls = type(act)
            if cls is Send:
                self._send(u, act)
            elif cls is Timer:
                self._push(self.now + act.delay, EV_TIMER, u, (act.kind, act.key))
            elif cls is Deliver:
                pkt = act.packet
                m = self.metrics
                m.delivered += 1
                m.bytes_delivered += pkt.size
                self._sample_bytes += pkt.size
                m.delay_sum += self.now - pkt.created_at
                if self.trace_on:
                    self._log(t=self.now, ev="deliver", node=u, src=pkt.src, seq=pkt.seq)
            elif cls is Drop:
                self.metrics.dropped[act.reason] += 1
                if self.trace_on:
                    self._log(t=self.now, ev="drop", node=u, src=act.packet.src, seq=act.packet.seq, reason=act.reason)
            elif cls is ToController:
                self._southbound(u, CONTROLLER, act.msg, upstream=True)
            elif cls is ToSwitch:
                self._southbound(u, act.target, act.msg, upstream=False)
            else:  # pragma: no cover
                raise TypeError(f"unknown action {act!r}")

    def _count_control(self, msg) -> None:
        self.metrics.total_messages += 1
        self.metrics.messages_by_type[type(msg).__name__] += 1

    def _send(self, u: int, act: Send) -> None:
        msg = act.msg
        is_data = type(msg) is DataPacket
        self._uid += 1
        uid = self._uid
        now = self.now
        if is_data:
            self.metrics.data_transmissions += 1
        else:
            self._count_control(msg)
        if act.relay_of is not None and self._watch:
            w = self._watch.pop(act.relay_of, None)
            if w is not None:
                observer, subject, kind, t_rx = w
                if (
                    subject == u
                    and t_rx is not None
                    and now - t_rx <= self.cfg.link.overhear_timeout
                    and self.channel.in_range(observer, u)
                ):
                    self.nodes[observer].ledger(u).record_forwarded(kind, t_rx)
                    if self.audit:
                        self.observations.append([observer, u, kind.value, t_rx, True])
        size = encoded_size(msg)
        if self.trace_on:
            self._log(t=now, ev="tx", node=u, to=act.to, uid=uid, relay_of=act.relay_of, route=list(act.route), msg=to_record(msg))
        if act.to == BROADCAST:
            for v, t in self.channel.broadcast(u, size, now):
                self._push(t, EV_RX, v, Frame(uid, u, msg, act.route, act.southbound))
            return
        t = self.channel.unicast(u, act.to, size, now)
        if t is None:
            if is_data:
                self.metrics.dropped["channel"] += 1
            else:
                self.control_dropped["channel"] += 1
            if self.trace_on:
                self._log(t=now, ev="lost", node=u, to=act.to, uid=uid)
            return
        if is_data:
            self.in_transit += 1
        if self.observe:
            kind = _expects_forward(msg, act.to, act.route)
            if kind is not None:
                self._watch[uid] = [u, act.to, kind, None]
        self._push(t, EV_RX, act.to, Frame(uid, u, msg, act.route, act.southbound))

    def _southbound(self, u: int, target: int, msg, upstream: bool) -> None:
        if self.cfg.control_channel == "ideal":
            self._count_control(msg)
            if self.trace_on:
                self._log(t=self.now, ev="south", node=u, to=target, msg=to_record(msg))
            self._push(self.now + self.cfg.link.ideal_latency, EV_SOUTH, target, msg)
            return
        if upstream:
            route = tuple(self.nodes[u].controller_path)
        else:
            found = self.nodes[CONTROLLER].controller.route_to(target)
            route = tuple(found) if found else ()
        if not route and self.channel.in_range(u, target):
            route = (target,)
        if not route:
            self.control_dropped["no_southbound_route"] += 1
            return
        self._send(u, Send(msg, route[0], None, route[1:], True))

    # -- main loop -------------------------------------------------------

    def _start(self) -> None:
        cfg = self.cfg
        jitter = cfg.timers.hello_jitter * cfg.timers.hello_interval
        for node in self.nodes:
            offset = self._jitter_rng.uniform(0, jitter) if jitter > 0 else 0.0
            self.now = 0.0
            self._apply(node.id, node.start(0.0, offset))
        if getattr(self.channel, "ticks", False):
            self._push(cfg.mobility.tick, EV_TICK, None)
        self._push(1.0, EV_SAMPLE, None)
        interval = cfg.packet_interval()
        for i, _ in enumerate(self.flows):
            first = cfg.traffic.start + self._traffic_rng.uniform(0, interval)
            self._push(first, EV_GEN, i)

    def _generate(self, i: int) -> None:
        flow = self.flows[i]
        flow.seq += 1
        pkt = DataPacket(flow.src, flow.dst, flow.seq, self.cfg.packet_size(), self.now)
        self.metrics.generated += 1
        if self.trace_on:
            self._log(t=self.now, ev="gen", node=flow.src, dst=flow.dst, seq=flow.seq)
        self._apply(flow.src, self.nodes[flow.src].originate(pkt, self.now))
        self._push(self.now + self.cfg.packet_interval(), EV_GEN, i)

    def _sample(self) -> None:
        m = self.metrics
        m.samples.append(Sample(self.now, m.avg_delay, float(self._sample_bytes), m.total_messages))
        self._sample_bytes = 0
        if self._watch:
            horizon = self.now - self.cfg.link.overhear_timeout
            stale = [k for k, w in self._watch.items() if w[3] is not None and w[3] < horizon]
            for k in stale:
                del self._watch[k]
        self._push(self.now + 1.0, EV_SAMPLE, None)

    def run(self) -> RunResult:
        self._start()
        end = self.cfg.sim_duration
        heap = self._heap
        nodes = self.nodes
        while heap:
            t, _, kind, a, b = heapq.heappop(heap)
            if t >= end:
                heapq.heappush(heap, (t, 0, kind, a, b))
                break
            self.now = t
            if kind == EV_RX:
                if type(b.msg) is DataPacket:
                    self.in_transit -= 1
                if self._watch:
                    w = self._watch.get(b.uid)
                    if w is not None:
                        w[3] = t
                        nodes[w[0]].ledger(a).record_received(w[2], t)
                        if self.audit:
                            self.observations.append([w[0], a, w[2].value, t, False])
                if self.trace_on:
                    self._log(t=t, ev="rx", node=a, sender=b.sender, uid=b.uid)
                self._apply(a, nodes[a].receive(b, t))
            elif kind == EV_TIMER:
                self._apply(a, nodes[a].on_timer(b[0], b[1], t))
            elif kind == EV_GEN:
                self._generate(a)
            elif kind == EV_TICK:
                self.channel.tick(t)
                self._push(t + self.cfg.mobility.tick, EV_TICK, None)
            elif kind == EV_SAMPLE:
                self._sample()
            elif kind == EV_SOUTH:
                self._apply(a, nodes[a].handle_southbound_direct(b, t))
        self.now = end
        if not self.metrics.samples or self.metrics.samples[-1].time < end:
            # closing sample so the CSV alone reproduces the run's totals
            m = self.metrics
            m.samples.append(Sample(end, m.avg_delay, float(self._sample_bytes), m.total_messages))
            self._sample_bytes = 0
        self.metrics.in_flight = self.in_transit + sum(len(nd.buffer) for nd in nodes)
        log = nodes[CONTROLLER].controller.log if self.sd else []
        return RunResult(
            self.cfg,
            self.metrics,
            self.trace,
            [(f.src, f.dst) for f in self.flows],
            self.malicious,
            log,
        )


def run(cfg: ScenarioConfig, **kw) -> RunResult:
    return Simulator(cfg, **kw).run()
