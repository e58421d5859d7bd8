"""Per-node protocol state machine for AODV, TAODV and the SD-TAODV roles.

A node never touches the network directly. Every handler returns a list of
actions (``Send``, ``Deliver``, ``Drop``, ``Timer``, ``ToController``,
``ToSwitch``) that the simulator carries out.
"""

from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Deque, Dict, List, Optional, Tuple

from . import controller as ctl
from .trust import (
    DEFAULT_TRUST,
    PathTrust,
    RouteScoreWeights,
    TrustLedger,
    extend_path_trust,
    route_score,
)
from .wire import (
    NO_NODE,
    DataPacket,
    FlowMod,
    FlowTableEntry,
    Hello,
    Message,
    PacketIn,
    Rerr,
    TopologyRequest,
    TRrep,
    TRreq,
)

BROADCAST = -1


class Mode(str, Enum):
    AODV = "AODV"
    TAODV = "TAODV"
    SDTAODV_SWITCH = "SDTAODV_SWITCH"
    SDTAODV_CONTROLLER = "SDTAODV_CONTROLLER"


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class Send:
    msg: Message
    to: int
    relay_of: Optional[int] = None
    route: Tuple[int, ...] = ()
    southbound: bool = False


@dataclass(frozen=True)
class Deliver:
    packet: DataPacket


@dataclass(frozen=True)
class Drop:
    packet: DataPacket
    reason: str


@dataclass(frozen=True)
class Timer:
    delay: float
    kind: str
    key: object = None


@dataclass(frozen=True)
class ToController:
    msg: Message


@dataclass(frozen=True)
class ToSwitch:
    target: int
    msg: Message


@dataclass
class Frame:
    """What a node sees of a received transmission."""

    uid: int
    sender: int
    msg: Message
    route: Tuple[int, ...] = ()
    southbound: bool = False


# ---------------------------------------------------------------------------
# state


@dataclass
class NodeParams:
    hello_interval: float = 1.0
    allowed_hello_loss: int = 3
    active_route_timeout: float = 6.0
    rrep_lifetime: float = 6.0
    rebroadcast_cap: int = 3
    buffer_capacity: int = 64
    discovery_timeout: float = 1.0
    discovery_retries: int = 2
    net_diameter: int = 35
    flow_idle_timeout: float = 10.0
    controller_hello_interval: float = 1.0
    discovery_period: float = 5.0
    discovery_deadline: float = 2.0
    discovery_hold: float = 0.005
    weights: RouteScoreWeights = field(default_factory=RouteScoreWeights)
    omega: Tuple[float, float] = (1.0, 0.0)
    trust_window: float = 10.0
    trust_buckets: int = 10
    default_trust: float = DEFAULT_TRUST
    trust_observation: bool = True
    p_drop: float = 0.8


@dataclass
class RoutingTableEntry:
    dest: int
    next_hop: int
    hop_count: int
    dest_seq: int
    path_trust: float
    expiry: float
    valid: bool = True


@dataclass
class RreqCacheEntry:
    source_addr: int
    rreq_id: int
    best_trust_seen: float
    rebroadcasts: int
    inserted_at: float


@dataclass
class FlowState:
    entry: FlowTableEntry
    last_used: float


@dataclass
class _Pending:
    attempt: int = 0
    started: float = 0.0


@dataclass
class _Hold:
    copies: List[Tuple[TopologyRequest, int]] = field(default_factory=list)
    decided: bool = False


class ForwardingNode:
    def __init__(
        self,
        node_id: int,
        mode: Mode,
        params: Optional[NodeParams] = None,
        malicious: bool = False,
        rng: Optional[random.Random] = None,
        controller_id: Optional[int] = None,
    ):
        self.id = node_id
        self.mode = Mode(mode)
        self.p = params or NodeParams()
        self.malicious = malicious
        self.rng = rng or random.Random(node_id)
        self.controller_id = controller_id

        self.seq = 0
        self.rreq_id = 0
        self.neighbors: Dict[int, float] = {}
        self.routes: Dict[int, RoutingTableEntry] = {}
        self.rreq_cache: Dict[Tuple[int, int], RreqCacheEntry] = {}
        self.buffer: Deque[DataPacket] = deque()
        self.pending: Dict[int, _Pending] = {}
        self.flow_table: Dict[int, FlowState] = {}
        self.ledgers: Dict[int, TrustLedger] = {}
        self.static_trust: Optional[Dict[int, float]] = None
        self.counters: Counter = Counter()
        self._rerr_sent: Dict[int, float] = {}

        # SD-TAODV switch side
        self.controller_path: Tuple[int, ...] = ()
        self.last_controller_contact: Optional[float] = None
        self._holds: Dict[int, _Hold] = {}

        self.controller: Optional[ctl.Controller] = None
        if self.mode is Mode.SDTAODV_CONTROLLER:
            self.controller_id = node_id
            self.controller = ctl.Controller(
                node_id,
                self.p.weights,
                hello_interval=self.p.controller_hello_interval,
                discovery_timeout=self.p.discovery_deadline,
                flow_idle_timeout=self.p.flow_idle_timeout,
                default_trust=self.p.default_trust,
                max_missed=self.p.allowed_hello_loss,
            )

    # -- helpers ---------------------------------------------------------

    @property
    def is_sd(self) -> bool:
        return self.mode in (Mode.SDTAODV_SWITCH, Mode.SDTAODV_CONTROLLER)

    @property
    def uses_trust(self) -> bool:
        return self.mode is not Mode.AODV

    def ledger(self, neighbor: int) -> TrustLedger:
        led = self.ledgers.get(neighbor)
        if led is None:
            led = TrustLedger(
                self.id,
                neighbor,
                self.p.trust_window,
                self.p.trust_buckets,
                self.p.omega,
                self.p.default_trust,
            )
            self.ledgers[neighbor] = led
        return led

    def link_trust(self, neighbor: int, now: float) -> float:
        """This node's trust in ``neighbor`` as a next hop."""
        if self.static_trust is not None:
            return self.static_trust.get(neighbor, self.p.default_trust)
        if not self.p.trust_observation:
            return 1.0
        led = self.ledgers.get(neighbor)
        if led is None:
            return self.p.default_trust
        return led.trust(now)

    def neighbor_trust(self, now: float) -> Dict[int, float]:
        return {n: self.link_trust(n, now) for n in sorted(self.neighbors)}

    def _better(self, hops: int, trust: float, old: RoutingTableEntry) -> bool:
        if self.mode is Mode.AODV:
            return hops < old.hop_count
        w = self.p.weights.normalized()
        new_s = route_score(PathTrust(trust, hops), w)
        old_s = route_score(PathTrust(old.path_trust, old.hop_count), w)
        tie_new = 0.0 if w.hops_only else -trust
        tie_old = 0.0 if w.hops_only else -old.path_trust
        return (-new_s, tie_new, hops) < (-old_s, tie_old, old.hop_count)

    def valid_route(self, dest: int, now: float) -> Optional[RoutingTableEntry]:
        e = self.routes.get(dest)
        if e is None or not e.valid:
            return None
        if e.expiry <= now:
            e.valid = False
            return None
        return e

    def update_route(
        self,
        dest: int,
        next_hop: int,
        hops: int,
        seq: int,
        trust: float,
        expiry: float,
        now: float,
        force: bool = False,
    ) -> bool:
        """Install a route under AODV freshness rules; returns True if installed."""
        old = self.routes.get(dest)
        if old is not None and not force:
            live = old.valid and old.expiry > now
            if seq < old.dest_seq:
                return False
            if seq == old.dest_seq and live and not self._better(hops, trust, old):
                if old.next_hop == next_hop and old.hop_count == hops:
                    old.expiry = max(old.expiry, expiry)
                return False
        self.routes[dest] = RoutingTableEntry(dest, next_hop, hops, seq, trust, expiry)
        return True

    def _enqueue(self, packet: DataPacket) -> List:
        out = []
        if len(self.buffer) >= self.p.buffer_capacity:
            old = self.buffer.popleft()
            self.counters["buffer_overflow"] += 1
            out.append(Drop(old, "buffer_overflow"))
        self.buffer.append(packet)
        return out

    def _flush(self, dest: int, now: float) -> List:
        ready = [p for p in self.buffer if p.dst == dest]
        if not ready:
            return []
        self.buffer = deque(p for p in self.buffer if p.dst != dest)
        out = []
        for pkt in ready:
            out.extend(self._forward_data(pkt, now, from_buffer=True))
        return out

    def _drop_buffered(self, dest: int, reason: str) -> List:
        keep: Deque[DataPacket] = deque()
        out = []
        for pkt in self.buffer:
            if pkt.dst == dest:
                out.append(Drop(pkt, reason))
            else:
                keep.append(pkt)
        self.buffer = keep
        return out

    # -- lifecycle -------------------------------------------------------

    def start(self, now: float, hello_offset: float = 0.0) -> List:
        out: List = [Timer(hello_offset, "hello"), Timer(hello_offset + self.p.hello_interval, "nbr_check")]
        if self.mode is Mode.SDTAODV_SWITCH:
            out.append(Timer(hello_offset, "ctrl_hello"))
        if self.mode is Mode.SDTAODV_CONTROLLER:
            out.append(Timer(2 * self.p.hello_interval, "discovery"))
            out.append(Timer(self.p.controller_hello_interval, "ctrl_sweep"))
        return out

    def on_timer(self, kind: str, key, now: float) -> List:
        if kind == "hello":
            return self.emit_hello(now)
        if kind == "nbr_check":
            return self.check_neighbors(now) + [Timer(self.p.hello_interval, "nbr_check")]
        if kind == "ctrl_hello":
            return self.emit_controller_hello(now)
        if kind == "discovery_timeout":
            return self._discovery_timeout(key, now)
        if kind == "disc_hold":
            return self._release_hold(key, now)
        if kind == "discovery":
            return self._controller_discovery(now)
        if kind == "discovery_deadline":
            return self._controller_deadline(key, now)
        if kind == "ctrl_sweep":
            # stale switches are re-programmed after the next periodic round; an
            # immediate round per stale event feeds back into more stale events
            self.controller.sweep(now)
            return [Timer(self.p.controller_hello_interval, "ctrl_sweep")]
        raise ValueError(f"unknown timer {kind!r}")

    # -- hello / neighbours ---------------------------------------------

    def emit_hello(self, now: float) -> List:
        return [Send(Hello(self.id), BROADCAST), Timer(self.p.hello_interval, "hello")]

    def emit_controller_hello(self, now: float) -> List:
        out: List = [Timer(self.p.controller_hello_interval, "ctrl_hello")]
        out.insert(0, ToController(Hello(self.id)))
        return out

    @property
    def connected(self) -> bool:
        return self._connected_at(None)

    def _connected_at(self, now: Optional[float]) -> bool:
        if self.mode is Mode.SDTAODV_CONTROLLER:
            return True
        if self.last_controller_contact is None:
            return False
        if now is None:
            return True
        limit = self.p.allowed_hello_loss * self.p.controller_hello_interval
        return now - self.last_controller_contact <= limit

    def check_neighbors(self, now: float) -> List:
        limit = self.p.allowed_hello_loss * self.p.hello_interval
        lost = [n for n, t in self.neighbors.items() if now - t > limit]
        if not lost:
            return []
        for n in lost:
            del self.neighbors[n]
            self.counters["neighbor_lost"] += 1
        lost_set = set(lost)
        if self.is_sd:
            for dest in [d for d, fs in self.flow_table.items() if fs.entry.action_next_hop in lost_set]:
                del self.flow_table[dest]
            return []
        unreachable = []
        for dest, e in self.routes.items():
            if e.valid and e.next_hop in lost_set:
                e.valid = False
                e.dest_seq += 1
                unreachable.append((dest, e.dest_seq))
        if unreachable:
            return [Send(Rerr(tuple(unreachable)), BROADCAST)]
        return []

    # -- dispatch --------------------------------------------------------

    def receive(self, frame: Frame, now: float) -> List:
        self.neighbors[frame.sender] = now
        if frame.route:
            self.counters["relay_control"] += 1
            return [
                Send(frame.msg, frame.route[0], frame.uid, frame.route[1:], frame.southbound)
            ]
        msg = frame.msg
        if frame.southbound:
            return self.handle_southbound_direct(msg, now)
        if isinstance(msg, DataPacket):
            return self.handle_data(msg, now, relay_of=frame.uid)
        if isinstance(msg, Hello):
            return []
        if isinstance(msg, TRreq):
            return self.handle_trreq(msg, frame.sender, now, frame.uid)
        if isinstance(msg, TRrep):
            return self.handle_trrep(msg, frame.sender, now, frame.uid)
        if isinstance(msg, Rerr):
            return self.handle_rerr(msg, frame.sender, now)
        if isinstance(msg, TopologyRequest):
            return self.handle_topology_request(msg, frame.sender, now)
        if isinstance(msg, FlowMod):
            return self.apply_flow_mod(msg, now)
        if isinstance(msg, PacketIn):
            return []
        raise TypeError(f"unhandled message {type(msg).__name__}")

    def handle_southbound_direct(self, msg: Message, now: float) -> List:
        """Southbound message addressed to this node (side channel or in-band envelope)."""
        if self.mode is Mode.SDTAODV_CONTROLLER:
            return self.handle_southbound(msg, now)
        if isinstance(msg, Hello):
            self.last_controller_contact = now
            return []
        if isinstance(msg, FlowMod):
            return self.apply_flow_mod(msg, now)
        return []

    # -- TAODV / AODV control -------------------------------------------

    def handle_trreq(self, req: TRreq, sender: int, now: float, uid: Optional[int] = None) -> List:
        if self.is_sd:
            self.counters["packet_in_sent"] += 1
            return self._escalate(PacketIn(self.id, req), now)
        if req.source_addr == self.id:
            return []
        hops = req.hop_count + 1
        if self.uses_trust:
            cand = extend_path_trust(PathTrust(req.packet_trust, req.hop_count), self.link_trust(sender, now))
            value = cand.value
        else:
            value = req.packet_trust
        key = (req.source_addr, req.rreq_id)
        entry = self.rreq_cache.get(key)
        expiry = now + self.p.active_route_timeout
        if entry is None:
            entry = RreqCacheEntry(req.source_addr, req.rreq_id, value, 0, now)
            self.rreq_cache[key] = entry
            old = self.routes.get(req.source_addr)
            if old is not None and old.valid and old.expiry > now and req.source_seq < old.dest_seq:
                self.counters["rreq_stale"] += 1
                return []
            self.update_route(req.source_addr, sender, hops, req.source_seq, value, expiry, now)
            return self._answer_or_flood(req, hops, value, entry, now)
        if self.mode is Mode.AODV or value <= entry.best_trust_seen:
            self.counters["rreq_dup_dropped"] += 1
            return []
        if entry.rebroadcasts >= self.p.rebroadcast_cap:
            self.counters["rreq_cap_dropped"] += 1
            return []
        entry.best_trust_seen = value
        self.update_route(req.source_addr, sender, hops, req.source_seq, value, expiry, now)
        return self._answer_or_flood(req, hops, value, entry, now)

    def _answer_or_flood(self, req: TRreq, hops: int, value: float, entry: RreqCacheEntry, now: float) -> List:
        back = self.routes.get(req.source_addr)
        if back is None or not back.valid:
            return []
        if req.dest_addr == self.id:
            self.seq = max(self.seq, req.dest_seq)
            entry.rebroadcasts += 1
            rep = TRrep(0, req.source_addr, req.source_seq, self.id, self.seq, 1.0, self.p.rrep_lifetime)
            return [Send(rep, back.next_hop)]
        fwd = self.valid_route(req.dest_addr, now)
        if fwd is not None and req.dest_seq > 0 and fwd.dest_seq >= req.dest_seq:
            entry.rebroadcasts += 1
            trust = fwd.path_trust if self.uses_trust else 1.0
            rep = TRrep(
                fwd.hop_count,
                req.source_addr,
                req.source_seq,
                req.dest_addr,
                fwd.dest_seq,
                trust,
                max(fwd.expiry - now, 0.001),
            )
            return [Send(rep, back.next_hop)]
        if hops >= self.p.net_diameter:
            return []
        entry.rebroadcasts += 1
        return [Send(replace(req, hop_count=hops, packet_trust=value), BROADCAST)]

    def handle_trrep(self, rep: TRrep, sender: int, now: float, uid: Optional[int] = None) -> List:
        if self.is_sd:
            self.counters["packet_in_sent"] += 1
            return self._escalate(PacketIn(self.id, rep), now)
        hops = rep.hop_count + 1
        if self.uses_trust:
            value = extend_path_trust(PathTrust(rep.packet_trust, rep.hop_count), self.link_trust(sender, now)).value
        else:
            value = rep.packet_trust
        self.update_route(rep.dest_addr, sender, hops, rep.dest_seq, value, now + rep.lifetime, now)
        if rep.source_addr == self.id:
            done = self.pending.pop(rep.dest_addr, None)
            if done is not None:
                self.counters["discovery_done"] += 1
            if self.valid_route(rep.dest_addr, now) is None:
                return []
            return self._flush(rep.dest_addr, now)
        back = self.valid_route(rep.source_addr, now)
        if back is None:
            self.counters["routing_failure"] += 1
            return []
        out = replace(rep, hop_count=hops, packet_trust=value)
        back.expiry = max(back.expiry, now + self.p.active_route_timeout)
        return [Send(out, back.next_hop, relay_of=uid)]

    def handle_rerr(self, rerr: Rerr, sender: int, now: float) -> List:
        if self.is_sd:
            return []
        lost = []
        for dest, seq in rerr.unreachable:
            e = self.routes.get(dest)
            if e is not None and e.valid and e.next_hop == sender:
                e.valid = False
                e.dest_seq = max(e.dest_seq, seq)
                lost.append((dest, e.dest_seq))
        if lost:
            return [Send(Rerr(tuple(lost)), BROADCAST)]
        return []

    # -- data plane ------------------------------------------------------

    def originate(self, packet: DataPacket, now: float) -> List:
        """Hand a locally generated packet to the node."""
        self.counters["data_generated"] += 1
        return self.handle_data(packet, now)

    def handle_data(self, packet: DataPacket, now: float, relay_of: Optional[int] = None) -> List:
        if packet.dst == self.id:
            return [Deliver(packet)]
        if self.malicious and packet.src != self.id and self.rng.random() < self.p.p_drop:
            self.counters["malicious_drop"] += 1
            return [Drop(packet, "malicious")]
        return self._forward_data(packet, now, relay_of=relay_of)

    def _forward_data(self, packet: DataPacket, now: float, relay_of=None, from_buffer=False) -> List:
        dst = packet.dst
        if self.is_sd:
            fs = self.lookup_flow(dst, now)
            if fs is not None:
                fs.last_used = now
                return [Send(packet, fs.entry.action_next_hop, relay_of=relay_of)]
            return self._enqueue(packet) + self._discover(dst, now)
        r = self.valid_route(dst, now)
        if r is not None:
            r.expiry = max(r.expiry, now + self.p.active_route_timeout)
            back = self.valid_route(packet.src, now)
            if back is not None:
                back.expiry = max(back.expiry, now + self.p.active_route_timeout)
            return [Send(packet, r.next_hop, relay_of=relay_of)]
        if packet.src == self.id or from_buffer:
            return self._enqueue(packet) + self._discover(dst, now)
        self.counters["no_route_drop"] += 1
        out: List = [Drop(packet, "no_route")]
        e = self.routes.get(dst)
        last = self._rerr_sent.get(dst)
        if e is not None and (last is None or now - last >= self.p.hello_interval):
            self._rerr_sent[dst] = now
            out.append(Send(Rerr(((dst, e.dest_seq),)), BROADCAST))
        return out

    def _discover(self, dst: int, now: float) -> List:
        if dst in self.pending:
            return []
        self.pending[dst] = _Pending(0, now)
        return self._originate_discovery(dst, 0, now)

    def _new_trreq(self, dst: int) -> TRreq:
        self.seq += 1
        self.rreq_id += 1
        known = self.routes.get(dst)
        dest_seq = known.dest_seq if known is not None else 0
        return TRreq(self.rreq_id, 0, self.id, self.seq, dst, dest_seq, 1.0)

    def _originate_discovery(self, dst: int, attempt: int, now: float) -> List:
        req = self._new_trreq(dst)
        self.counters["discovery_started"] += 1
        wait = self.p.discovery_timeout * (2 ** attempt)
        timer = Timer(wait, "discovery_timeout", (dst, attempt))
        if self.is_sd:
            return self._escalate(PacketIn(self.id, req), now) + [timer]
        self.rreq_cache[(self.id, req.rreq_id)] = RreqCacheEntry(self.id, req.rreq_id, 1.0, 1, now)
        return [Send(req, BROADCAST), timer]

    def _discovery_timeout(self, key, now: float) -> List:
        dst, attempt = key
        pend = self.pending.get(dst)
        if pend is None or pend.attempt != attempt:
            return []
        ready = self.lookup_flow(dst, now) if self.is_sd else self.valid_route(dst, now)
        if ready is not None:
            self.pending.pop(dst)
            return self._flush(dst, now)
        if attempt < self.p.discovery_retries:
            pend.attempt = attempt + 1
            return self._originate_discovery(dst, attempt + 1, now)
        self.pending.pop(dst)
        self.counters["discovery_failed"] += 1
        return self._drop_buffered(dst, "no_route")

    # -- SD-TAODV switch -------------------------------------------------

    def lookup_flow(self, dest: int, now: float) -> Optional[FlowState]:
        fs = self.flow_table.get(dest)
        if fs is None:
            return None
        if now - fs.last_used > fs.entry.idle_timeout:
            del self.flow_table[dest]
            self.counters["flow_idle_evicted"] += 1
            return None
        if fs.entry.action_next_hop not in self.neighbors:
            return None
        return fs

    def _escalate(self, pin: PacketIn, now: float) -> List:
        if self.mode is Mode.SDTAODV_CONTROLLER:
            return self._dispatch_flow_mods(self.controller.handle_packet_in(pin, now), now)
        return [ToController(pin)]

    def apply_flow_mod(self, fm: FlowMod, now: float) -> List:
        if not self._connected_at(now):
            self.counters["flowmod_not_connected"] += 1
            return []
        for e in fm.entries:
            self.flow_table[e.match_dest] = FlowState(e, now)
        out: List = []
        if fm.reply_to != NO_NODE:
            answered = any(e.match_dest == fm.reply_to for e in fm.entries)
            if not answered and fm.reply_to in self.pending:
                self.pending.pop(fm.reply_to)
                self.counters["discovery_failed"] += 1
                out.extend(self._drop_buffered(fm.reply_to, "no_route"))
        for dest in sorted({e.match_dest for e in fm.entries}):
            if self.lookup_flow(dest, now) is None:
                continue  # next hop not (yet) a live neighbour; the pending timer retries
            if dest in self.pending:
                self.pending.pop(dest)
                self.counters["discovery_done"] += 1
            if any(p.dst == dest for p in self.buffer):
                out.extend(self._flush(dest, now))
        return out

    def handle_topology_request(self, req: TopologyRequest, sender: int, now: float) -> List:
        if self.mode is Mode.SDTAODV_CONTROLLER:
            self.controller.on_discovery_return(req)
            return []
        if not self.is_sd:
            return []
        hold = self._holds.get(req.packet_id)
        if hold is None:
            self._holds = {k: v for k, v in self._holds.items() if k > req.packet_id - 4}
            hold = self._holds[req.packet_id] = _Hold([(req, sender)])
            return [Timer(self.p.discovery_hold, "disc_hold", req.packet_id)]
        if not hold.decided:
            hold.copies.append((req, sender))
            return []
        dec = ctl.relay_discovery(self.id, {}, [(req, sender)], seen_before=True)
        return self._discovery_actions(dec)

    def _release_hold(self, packet_id: int, now: float) -> List:
        hold = self._holds.get(packet_id)
        if hold is None or hold.decided:
            return []
        hold.decided = True
        first = hold.copies[0][0]
        if first.controller_addr == self.controller_id:
            self.controller_path = tuple(ctl.return_route(first, self.id))
        dec = ctl.relay_discovery(self.id, self.neighbor_trust(now), hold.copies)
        return self._discovery_actions(dec)

    def _discovery_actions(self, dec: ctl.RelayDecision) -> List:
        out: List = [Send(dec.forwarded, n) for n in dec.forward_to]
        for req in dec.returned:
            route = ctl.return_route(req, self.id)
            if route:
                out.append(Send(req, route[0], route=tuple(route[1:])))
        return out

    # -- SD-TAODV controller host ---------------------------------------

    def handle_southbound(self, msg: Message, now: float) -> List:
        c = self.controller
        if c is None:
            return []
        if isinstance(msg, Hello):
            return [ToSwitch(msg.node, c.handle_hello(msg, now))]
        if isinstance(msg, PacketIn):
            return self._dispatch_flow_mods(c.handle_packet_in(msg, now), now)
        if isinstance(msg, TopologyRequest):
            c.on_discovery_return(msg)
        return []

    def _dispatch_flow_mods(self, mods: List[FlowMod], now: float) -> List:
        out: List = []
        for fm in mods:
            if fm.target == self.id:
                out.extend(self.apply_flow_mod(fm, now))
            else:
                out.append(ToSwitch(fm.target, fm))
        return out

    def _controller_discovery(self, now: float) -> List:
        req, targets = self.controller.start_discovery(now, self.neighbor_trust(now))
        out: List = [Send(req, n) for n in targets]
        out.append(Timer(self.p.discovery_deadline, "discovery_deadline", req.packet_id))
        out.append(Timer(self.p.discovery_period, "discovery"))
        return out

    def _controller_deadline(self, packet_id: int, now: float) -> List:
        c = self.controller
        if c.round is None or c.round.packet_id != packet_id:
            return []
        c.finish_discovery(now)
        return self._dispatch_flow_mods(c.refresh_flows(now), now)
