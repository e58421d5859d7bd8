"""Trust mathematics: forwarding-ratio ledgers, node trust, path trust, route scoring.

Conventions used throughout the package:

* a ledger is owned by an *observer* and describes one *subject* neighbour;
  the forwarding ratio is ``forwarded / received`` over a sliding window;
* link trust ``(u, v)`` is u's trust in v, used for the hop u -> v;
* path trust is the product of link trusts, so it never grows as hops are added.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

from .topology import TopologySnapshot

DEFAULT_TRUST = 0.5
DEFAULT_WINDOW = 10.0
DEFAULT_BUCKETS = 10


class PacketClass(str, Enum):
    CONTROL = "control"
    DATA = "data"


class NoPath(Exception):
    """Raised when the destination cannot be reached over usable links."""


@dataclass(frozen=True)
class NodeTrust:
    observer: int
    subject: int
    value: float
    as_of: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"node trust out of range: {self.value}")


@dataclass(frozen=True)
class PathTrust:
    value: float = 1.0
    hop_count: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"path trust out of range: {self.value}")
        if self.hop_count < 0:
            raise ValueError("negative hop count")


@dataclass(frozen=True)
class RouteScoreWeights:
    """Weights of the route objective ``alpha * trust + beta * hop_term``.

    The hop term is ``1 - hops / max_hops`` (clamped), so larger is better for
    both factors and ``alpha=0`` ranks routes exactly like min-hop AODV.
    """

    alpha: float = 1.0
    beta: float = 0.0
    max_hops: int = 10

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("route weights must be non-negative")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")

    def normalized(self) -> "RouteScoreWeights":
        total = self.alpha + self.beta
        return RouteScoreWeights(self.alpha / total, self.beta / total, self.max_hops)

    @property
    def trust_only(self) -> bool:
        return self.beta == 0

    @property
    def hops_only(self) -> bool:
        return self.alpha == 0


class TrustLedger:
    """Sliding-window packet counters kept by ``observer`` about ``subject``.

    Counters live in ``n_buckets`` fixed-width slots covering ``window``
    seconds. A forward is credited to the slot of the reception it answers,
    which keeps ``forwarded <= received`` slot by slot.
    """

    __slots__ = (
        "observer",
        "subject",
        "window",
        "n_buckets",
        "width",
        "omega",
        "default_trust",
        "_slots",
    )

    def __init__(
        self,
        observer: int = -1,
        subject: int = -1,
        window: float = DEFAULT_WINDOW,
        n_buckets: int = DEFAULT_BUCKETS,
        omega: Tuple[float, float] = (1.0, 0.0),
        default_trust: float = DEFAULT_TRUST,
    ):
        if window <= 0 or n_buckets < 1:
            raise ValueError("window and bucket count must be positive")
        w1, w2 = omega
        if w1 < 0 or w2 < 0 or not math.isclose(w1 + w2, 1.0, abs_tol=1e-9):
            raise ValueError(f"omega weights must be >= 0 and sum to 1, got {omega}")
        if not 0.0 <= default_trust <= 1.0:
            raise ValueError("default trust must lie in [0, 1]")
        self.observer = observer
        self.subject = subject
        self.window = float(window)
        self.n_buckets = n_buckets
        self.width = self.window / n_buckets
        self.omega = (float(w1), float(w2))
        self.default_trust = default_trust
        # slot: [bucket_index, ctrl_rx, ctrl_fwd, data_rx, data_fwd]
        self._slots = [[-1, 0, 0, 0, 0] for _ in range(n_buckets)]

    def _bucket(self, t: float) -> int:
        return int(math.floor(t / self.width))

    def _slot(self, t: float, create: bool) -> Optional[list]:
        idx = self._bucket(t)
        slot = self._slots[idx % self.n_buckets]
        if slot[0] != idx:
            if not create or slot[0] > idx:
                return None
            slot[:] = [idx, 0, 0, 0, 0]
        return slot

    def record_received(self, kind: PacketClass, t: float) -> None:
        slot = self._slot(t, create=True)
        if slot is not None:
            slot[1 if kind is PacketClass.CONTROL else 3] += 1

    def record_forwarded(self, kind: PacketClass, t_received: float) -> bool:
        """Credit a forward to the slot holding its reception; False if aged out."""
        slot = self._slot(t_received, create=False)
        if slot is None:
            return False
        rx, fwd = (1, 2) if kind is PacketClass.CONTROL else (3, 4)
        if slot[fwd] >= slot[rx]:
            return False
        slot[fwd] += 1
        return True

    def counts(self, kind: PacketClass, now: float) -> Tuple[int, int]:
        """(forwarded, received) over buckets in the window ending at ``now``."""
        newest = self._bucket(now)
        oldest = newest - self.n_buckets + 1
        rx, fwd = (1, 2) if kind is PacketClass.CONTROL else (3, 4)
        c = r = 0
        for slot in self._slots:
            if oldest <= slot[0] <= newest:
                r += slot[rx]
                c += slot[fwd]
        return c, r

    def observed(self, now: float) -> bool:
        return any(self.counts(k, now)[1] for k in PacketClass)

    def forwarding_ratio(self, kind: PacketClass, now: float) -> float:
        return forwarding_ratio(self, kind, now)

    def trust(self, now: float) -> float:
        return node_trust(self, now).value


def forwarding_ratio(ledger: TrustLedger, kind: PacketClass, now: float) -> float:
    if now < 0:
        raise ValueError("time must be non-negative")
    forwarded, received = ledger.counts(PacketClass(kind), now)
    if received == 0:
        return ledger.default_trust
    return forwarded / received


def node_trust(ledger: TrustLedger, now: float) -> NodeTrust:
    w1, w2 = ledger.omega
    cr = forwarding_ratio(ledger, PacketClass.CONTROL, now) if w1 else 0.0
    dr = forwarding_ratio(ledger, PacketClass.DATA, now) if w2 else 0.0
    value = min(1.0, max(0.0, w1 * cr + w2 * dr))
    return NodeTrust(ledger.observer, ledger.subject, value, now)


def extend_path_trust(
    incoming_packet_trust: float | PathTrust, link_trust: NodeTrust | float
) -> PathTrust:
    """Multiply the trust carried by a control packet by one more link."""
    if isinstance(incoming_packet_trust, PathTrust):
        pt, hops = incoming_packet_trust.value, incoming_packet_trust.hop_count
    else:
        pt, hops = float(incoming_packet_trust), 0
    link = link_trust.value if isinstance(link_trust, NodeTrust) else float(link_trust)
    if not (0.0 <= pt <= 1.0 and 0.0 <= link <= 1.0):
        raise ValueError("trust inputs must lie in [0, 1]")
    return PathTrust(link * pt, hops + 1)


def hop_term(hop_count: int, max_hops: int) -> float:
    return 1.0 - min(hop_count, max_hops) / max_hops


def route_score(trust: PathTrust, weights: RouteScoreWeights) -> float:
    w = weights.normalized()
    return w.alpha * trust.value + w.beta * hop_term(trust.hop_count, w.max_hops)


def path_key(value: float, hops: int, path: Sequence[int], weights: RouteScoreWeights):
    """Total order on routes; smaller is better.

    Score first, then higher trust, fewer hops and finally the lexicographically
    smallest node sequence (which starts with the lowest next-hop id). Trust is
    left out of the tie-break when it carries no weight so that hop-only scoring
    ranks routes exactly like a min-hop search.
    """
    score = route_score(PathTrust(value, hops), weights)
    tie_trust = 0.0 if weights.hops_only else -value
    return (-score, tie_trust, hops, tuple(path))


# ---------------------------------------------------------------------------
# centralized path selection


def _lex_dijkstra(snapshot: TopologySnapshot, src: int, dst: int, use_trust: bool):
    """Label-setting search under the key (-trust, hops, path) or (hops, path).

    Products only shrink and hops only grow along a path, so the first time
    ``dst`` is popped its label is optimal.
    """
    heap = [((-1.0 if use_trust else 0.0), 0, (src,), 1.0)]
    done = set()
    while heap:
        neg_t, hops, path, value = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return list(path), value
        for v in snapshot.neighbors(u):
            if v in done:
                continue
            t = snapshot.trust(u, v)
            if t <= 0.0:
                continue
            nv = t * value
            heapq.heappush(heap, ((-nv if use_trust else 0.0), hops + 1, path + (v,), nv))
    raise NoPath(f"no usable path {src} -> {dst}")


def _candidate_paths(snapshot: TopologySnapshot, src: int, dst: int, k: int) -> List[list]:
    import networkx as nx

    g = nx.DiGraph()
    g.add_nodes_from(snapshot.nodes)
    for e in snapshot.edges:
        a, b = tuple(e)
        for u, v in ((a, b), (b, a)):
            t = snapshot.trust(u, v)
            if t > 0.0:
                g.add_edge(u, v, w=-math.log(t), h=1)
    out = []
    for weight in ("w", "h"):
        try:
            gen = nx.shortest_simple_paths(g, src, dst, weight=weight)
            for i, p in enumerate(gen):
                if i >= k:
                    break
                out.append(p)
        except nx.NetworkXNoPath:
            pass
    return out


def best_trust_path(
    graph: TopologySnapshot,
    src: int,
    dst: int,
    weights: RouteScoreWeights = RouteScoreWeights(),
    k: int = 16,
) -> Tuple[List[int], PathTrust]:
    """Best route from ``src`` to ``dst`` under ``weights``.

    Pure-trust and pure-hop weightings are solved exactly; mixed weightings
    score the union of the ``k`` most trusted and ``k`` shortest simple paths.
    Links with zero trust are treated as unusable.
    """
    if src not in graph.nodes or dst not in graph.nodes:
        raise NoPath(f"endpoint missing from topology: {src} -> {dst}")
    if src == dst:
        return [src], PathTrust(1.0, 0)
    w = weights.normalized()
    if w.trust_only or w.hops_only:
        path, value = _lex_dijkstra(graph, src, dst, use_trust=not w.hops_only)
        return path, PathTrust(value, len(path) - 1)

    cands = [_lex_dijkstra(graph, src, dst, True)[0], _lex_dijkstra(graph, src, dst, False)[0]]
    cands += _candidate_paths(graph, src, dst, k)
    best = None
    for p in cands:
        value = graph.path_trust(p)
        key = path_key(value, len(p) - 1, p, w)
        if best is None or key < best[0]:
            best = (key, p, value)
    _, path, value = best
    return list(path), PathTrust(value, len(path) - 1)


def rank_candidates(candidates: Iterable[Tuple[Sequence[int], PathTrust]], weights: RouteScoreWeights):
    """Sort (path, trust) candidates best-first under the route order."""
    w = weights.normalized()
    return sorted(candidates, key=lambda c: path_key(c[1].value, c[1].hop_count, c[0], w))
