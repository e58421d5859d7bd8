"""SD-TAODV control plane: connections, topology discovery and flow programming.

The controller is transport-agnostic. It consumes southbound messages and
returned topology requests, and produces the messages it wants delivered;
the hosting node decides how they travel (ideal side channel or in-band).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .topology import TopologySnapshot, edge
from .trust import NoPath, RouteScoreWeights, best_trust_path
from .wire import NO_NODE, FlowMod, FlowTableEntry, Hello, PacketIn, TopologyRequest, TRrep, TRreq


class ConnState(str, Enum):
    CONNECTED = "connected"
    STALE = "stale"


@dataclass
class Connection:
    last_hello: float
    state: ConnState = ConnState.CONNECTED


class ConnectionRegistry:
    def __init__(self, hello_interval: float = 1.0, max_missed: int = 3):
        self.hello_interval = hello_interval
        self.max_missed = max_missed
        self.conns: Dict[int, Connection] = {}

    def hello(self, node: int, now: float) -> bool:
        """Refresh ``node``; True when it was unknown or stale before."""
        conn = self.conns.get(node)
        if conn is None:
            self.conns[node] = Connection(now)
            return True
        flipped = conn.state is ConnState.STALE
        conn.last_hello = now
        conn.state = ConnState.CONNECTED
        return flipped

    def sweep(self, now: float) -> List[int]:
        """Mark connections stale after ``max_missed`` silent intervals."""
        limit = self.max_missed * self.hello_interval
        newly = []
        for node, conn in self.conns.items():
            if conn.state is ConnState.CONNECTED and now - conn.last_hello > limit:
                conn.state = ConnState.STALE
                newly.append(node)
        return newly

    def state(self, node: int) -> Optional[ConnState]:
        conn = self.conns.get(node)
        return conn.state if conn else None

    def __contains__(self, node: int) -> bool:
        return node in self.conns


@dataclass
class DiscoveryRound:
    packet_id: int
    issued_at: float
    deadline: float
    request: TopologyRequest
    responses: List[TopologyRequest] = field(default_factory=list)

    def add(self, resp: TopologyRequest) -> bool:
        if resp.packet_id != self.packet_id:
            return False
        self.responses.append(resp)
        return True


def assemble_topology(rnd: DiscoveryRound, default_trust: float = 0.5) -> TopologySnapshot:
    """Merge the controller's own entry and every returned copy by set union.

    An adjacency claimed by either endpoint becomes an edge. With no
    responses the snapshot holds the controller alone.
    """
    controller = rnd.request.controller_addr
    snap = TopologySnapshot(nodes={controller}, as_of=rnd.deadline, default_trust=default_trust)
    if not rnd.responses:
        return snap
    for rep in (rnd.request,) + tuple(rnd.responses):
        for node, nbrs in rep.topology_list:
            snap.nodes.add(node)
            for m in nbrs:
                if m != node:
                    snap.nodes.add(m)
                    snap.edges.add(edge(node, m))
        for reporter, subject, t in rep.node_trust_list:
            if edge(reporter, subject) in snap.edges:
                snap.link_trust.setdefault((reporter, subject), t)
    return snap


@dataclass
class RelayDecision:
    forward_to: List[int]
    forwarded: Optional[TopologyRequest]
    returned: List[TopologyRequest]


def append_self(
    req: TopologyRequest, node: int, neighbor_trust: Mapping[int, float]
) -> TopologyRequest:
    if node in req.listed():
        return req
    nbrs = tuple(sorted(neighbor_trust))
    trust = tuple((node, n, neighbor_trust[n]) for n in nbrs)
    return TopologyRequest(
        req.packet_id,
        req.controller_addr,
        req.node_trust_list + trust,
        req.topology_list + ((node, nbrs),),
    )


def relay_discovery(
    node: int,
    neighbor_trust: Mapping[int, float],
    copies: Sequence[Tuple[TopologyRequest, int]],
    seen_before: bool = False,
) -> RelayDecision:
    """Decide what a switch does with the copies of one topology request.

    ``copies`` are the (request, sender) pairs that arrived while the switch
    held its first copy. A packet id seen in an earlier batch goes straight
    back to the controller. Otherwise the first copy gets this node appended
    and is forwarded to every neighbour not already holding the request (not
    listed in any copy and not a sender); with nobody left it is returned
    too. The remaining copies are returned with this node appended.
    """
    if not copies:
        return RelayDecision([], None, [])
    if seen_before:
        return RelayDecision([], None, [req for req, _ in copies])
    holding = set()
    for req, sender in copies:
        holding |= req.listed()
        holding.add(sender)
    targets = [n for n in sorted(neighbor_trust) if n not in holding and n != node]
    first = append_self(copies[0][0], node, neighbor_trust)
    rest = [append_self(req, node, neighbor_trust) for req, _ in copies[1:]]
    if targets:
        return RelayDecision(targets, first, rest)
    return RelayDecision([], None, [first] + rest)


def return_route(req: TopologyRequest, node: int) -> List[int]:
    """Hops from ``node`` back to the controller, reversing the recorded path."""
    path = [n for n in req.path() if n != node]
    return path[::-1]


def shortest_hops(snapshot: TopologySnapshot, src: int, dst: int) -> Optional[List[int]]:
    if src == dst:
        return [src]
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in snapshot.neighbors(u):
            if v not in prev:
                prev[v] = u
                if v == dst:
                    out = [v]
                    while prev[out[-1]] is not None:
                        out.append(prev[out[-1]])
                    return out[::-1]
                queue.append(v)
    return None


class Controller:
    """Event-driven controller state; one instance per SD-TAODV network."""

    def __init__(
        self,
        node_id: int,
        weights: RouteScoreWeights = RouteScoreWeights(),
        hello_interval: float = 1.0,
        discovery_timeout: float = 2.0,
        flow_idle_timeout: float = 10.0,
        default_trust: float = 0.5,
        max_missed: int = 3,
        k_candidates: int = 16,
    ):
        self.node_id = node_id
        self.weights = weights
        self.discovery_timeout = discovery_timeout
        self.flow_idle_timeout = flow_idle_timeout
        self.default_trust = default_trust
        self.k_candidates = k_candidates
        self.registry = ConnectionRegistry(hello_interval, max_missed)
        self.snapshot = TopologySnapshot(nodes={node_id}, default_trust=default_trust)
        self.round: Optional[DiscoveryRound] = None
        self.flows: Dict[Tuple[int, int], Tuple[int, ...]] = {}
        self.needs_refresh: set = set()
        self.log: List[dict] = []
        self._next_packet_id = 1

    # -- discovery -------------------------------------------------------

    def start_discovery(
        self, now: float, neighbor_trust: Mapping[int, float]
    ) -> Tuple[TopologyRequest, List[int]]:
        pid = self._next_packet_id
        self._next_packet_id += 1
        base = TopologyRequest(pid, self.node_id)
        req = append_self(base, self.node_id, neighbor_trust)
        self.round = DiscoveryRound(pid, now, now + self.discovery_timeout, req)
        self.log.append({"t": now, "event": "discovery_start", "packet_id": pid})
        return req, sorted(neighbor_trust)

    def on_discovery_return(self, req: TopologyRequest) -> bool:
        return self.round is not None and self.round.add(req)

    def finish_discovery(self, now: float) -> TopologySnapshot:
        if self.round is None:
            return self.snapshot
        self.snapshot = assemble_topology(self.round, self.default_trust)
        self.log.append(
            {
                "t": now,
                "event": "topology",
                "packet_id": self.round.packet_id,
                "responses": len(self.round.responses),
                "nodes": len(self.snapshot.nodes),
                "edges": len(self.snapshot.edges),
            }
        )
        self.round = None
        return self.snapshot

    # -- southbound ------------------------------------------------------

    def handle_hello(self, hello: Hello, now: float) -> Hello:
        if self.registry.hello(hello.node, now):
            self.needs_refresh.add(hello.node)
        return Hello(self.node_id)

    def sweep(self, now: float) -> List[int]:
        stale = self.registry.sweep(now)
        self.needs_refresh.update(stale)
        return stale

    def _flow_mods(self, path: Sequence[int], reply_to: int = NO_NODE) -> List[FlowMod]:
        snap = self.snapshot
        src, dst = path[0], path[-1]
        mods = []
        for i in range(len(path) - 1, -1, -1):
            entries = []
            if i < len(path) - 1:
                entries.append(
                    FlowTableEntry(
                        dst, path[i + 1], snap.path_trust(path[i:]), self.flow_idle_timeout
                    )
                )
            if i > 0:
                back = list(path[: i + 1])[::-1]
                entries.append(
                    FlowTableEntry(src, path[i - 1], snap.path_trust(back), self.flow_idle_timeout)
                )
            mods.append(FlowMod(path[i], tuple(entries), reply_to if i == 0 else NO_NODE))
        return mods

    def compute_path(self, src: int, dst: int):
        return best_trust_path(self.snapshot, src, dst, self.weights, k=self.k_candidates)

    def handle_packet_in(self, pin: PacketIn, now: float) -> List[FlowMod]:
        """Answer a switch's escalated control packet with flow programming.

        Returns one FlowMod per on-path switch, destination end first; the
        one addressed to the path source carries ``reply_to``. A NoPath
        outcome yields a single empty FlowMod back to the ingress switch.
        """
        if pin.ingress not in self.registry and pin.ingress != self.node_id:
            self.log.append({"t": now, "event": "packet_in_unregistered", "node": pin.ingress})
            return []
        msg = pin.payload
        if isinstance(msg, (TRreq, TRrep)):
            src, dst = msg.source_addr, msg.dest_addr
        else:  # pragma: no cover - PacketIn validates its payload
            return []
        try:
            path, trust = self.compute_path(src, dst)
        except NoPath:
            self.log.append({"t": now, "event": "no_path", "src": src, "dst": dst})
            return [FlowMod(pin.ingress, (), dst)]
        self.flows[(src, dst)] = tuple(path)
        self.log.append(
            {
                "t": now,
                "event": "packet_in",
                "src": src,
                "dst": dst,
                "path": list(path),
                "trust": trust.value,
            }
        )
        mods = self._flow_mods(path, reply_to=dst)
        if pin.ingress not in path:
            mods.append(FlowMod(pin.ingress, (), dst))
        return mods

    def refresh_flows(self, now: float) -> List[FlowMod]:
        """Re-route remembered flows whose best path moved or touched a stale switch."""
        out: List[FlowMod] = []
        for (src, dst), old in list(self.flows.items()):
            try:
                path, trust = self.compute_path(src, dst)
            except NoPath:
                continue
            path = tuple(path)
            if path != old:
                self.flows[(src, dst)] = path
                self.log.append(
                    {
                        "t": now,
                        "event": "reroute",
                        "src": src,
                        "dst": dst,
                        "path": list(path),
                        "trust": trust.value,
                    }
                )
                out.extend(self._flow_mods(path))
            elif self.needs_refresh.intersection(path):
                out.extend(m for m in self._flow_mods(path) if m.target in self.needs_refresh)
        self.needs_refresh.clear()
        return out

    def route_to(self, target: int) -> Optional[List[int]]:
        """Hop list (excluding the controller) for in-band delivery to ``target``."""
        path = shortest_hops(self.snapshot, self.node_id, target)
        return None if path is None else path[1:]

    def known_nodes(self) -> Iterable[int]:
        return self.snapshot.nodes
