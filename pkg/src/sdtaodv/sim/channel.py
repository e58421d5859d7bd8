"""Link layer abstractions: a geometric radio channel and a fixed test graph.

Both expose the same small surface used by the engine:
``tick``, ``neighbors``, ``in_range``, ``unicast`` and ``broadcast``. Times
returned are arrival times; ``None`` means the frame was lost.
"""

from __future__ import annotations

import math
import random
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import LinkConfig
from .mobility import RandomWaypoint


class StaticChannel:
    """Fixed adjacency with per-edge latency and no loss or contention.

    ``cuts`` maps an edge to the time it disappears; cuts take effect at the
    first engine tick at or after that time.
    """

    def __init__(
        self,
        n: int,
        edges: Iterable[Tuple[int, int]],
        latency: float = 1.0,
        per_edge: Optional[Dict] = None,
        cuts: Optional[Dict[Tuple[int, int], float]] = None,
    ):
        self.n = n
        self.adj: List[List[int]] = [[] for _ in range(n)]
        for a, b in edges:
            self.adj[a].append(b)
            self.adj[b].append(a)
        for lst in self.adj:
            lst.sort()
        self._set = [set(lst) for lst in self.adj]
        self.latency = latency
        self.per_edge = {frozenset(k): v for k, v in (per_edge or {}).items()}
        self.cuts = dict(cuts or {})
        self.ticks = bool(self.cuts)
        self.frames = 0

    def _lat(self, u: int, v: int) -> float:
        return self.per_edge.get(frozenset((u, v)), self.latency)

    def tick(self, now: float) -> None:
        for (a, b), t in list(self.cuts.items()):
            if t <= now:
                del self.cuts[(a, b)]
                if b in self._set[a]:
                    self.adj[a].remove(b)
                    self.adj[b].remove(a)
                    self._set[a].discard(b)
                    self._set[b].discard(a)

    def neighbors(self, u: int) -> List[int]:
        return self.adj[u]

    def in_range(self, u: int, v: int) -> bool:
        return v in self._set[u]

    def unicast(self, u: int, v: int, nbytes: int, now: float) -> Optional[float]:
        self.frames += 1
        if v not in self._set[u]:
            return None
        return now + self._lat(u, v)

    def broadcast(self, u: int, nbytes: int, now: float) -> List[Tuple[int, float]]:
        self.frames += 1
        return [(v, now + self._lat(u, v)) for v in self.adj[u]]


class RadioChannel:
    """Disc radio over random-waypoint positions with an abstract contention MAC.

    Every frame costs a fixed MAC overhead plus its serialization time plus an
    exponential backoff whose mean is ``backoff_per_frame`` times the number of
    frames sent in the sender's neighbourhood during the previous tick. A
    reception succeeds with probability ``(1 - link_loss) * (1 - collision)``,
    where the collision term ``1 - exp(-collision_coeff * load)`` uses the
    receiver's neighbourhood load. Unicast frames are retried up to
    ``max_retries`` times, each retry paying the hop latency again; broadcasts
    are sent once.
    """

    def __init__(
        self,
        n: int,
        rate_mbps: float,
        radio_range: float,
        link: LinkConfig,
        mobility: RandomWaypoint,
        rng_channel: random.Random,
        rng_mac: random.Random,
        tick: float = 1.0,
    ):
        self.n = n
        self.rate = rate_mbps * 1e6
        self.rate_mbps = rate_mbps
        self.range = radio_range
        self.range2 = radio_range * radio_range
        self.link = link
        self.mobility = mobility
        self.rng = rng_channel
        self.mac_rng = rng_mac
        self.tick_len = tick
        self.ticks = True
        self.frames_now = [0] * n
        self.load = [0.0] * n
        self._coll = [0.0] * n
        self.frames = 0
        self.adj: List[List[int]] = []
        self._dist: List[List[float]] = []
        self._loss_const = link.base_loss + link.rate_loss_slope * (rate_mbps - 1.0)
        self._refresh()

    def _refresh(self) -> None:
        pos = self.mobility.positions()
        n = self.n
        adj = [[] for _ in range(n)]
        dist = [[0.0] * n for _ in range(n)]
        r2 = self.range2
        for i in range(n):
            xi, yi = pos[i]
            row = dist[i]
            for j in range(i + 1, n):
                dx = pos[j][0] - xi
                dy = pos[j][1] - yi
                d2 = dx * dx + dy * dy
                d = math.sqrt(d2)
                row[j] = d
                dist[j][i] = d
                if d2 <= r2:
                    adj[i].append(j)
                    adj[j].append(i)
        for lst in adj:
            lst.sort()
        self.adj = adj
        self._sets = [set(lst) for lst in adj]
        self._dist = dist

    def tick(self, now: float) -> None:
        """Roll the load window, then advance mobility by one tick."""
        f = self.frames_now
        span = self.tick_len
        self.load = [(f[u] + sum(f[v] for v in self.adj[u])) / span for u in range(self.n)]
        k = self.link.collision_coeff
        self._coll = [1.0 - math.exp(-k * x) for x in self.load]
        self.frames_now = [0] * self.n
        self.mobility.step(self.tick_len)
        self._refresh()

    def neighbors(self, u: int) -> List[int]:
        return self.adj[u]

    def in_range(self, u: int, v: int) -> bool:
        return v in self._sets[u]

    def distance(self, u: int, v: int) -> float:
        return self._dist[u][v]

    def loss(self, u: int, v: int) -> float:
        p = self._loss_const + self.link.dist_loss_slope * (self._dist[u][v] / self.range)
        return min(1.0, max(0.0, p))

    def collision(self, v: int) -> float:
        return self._coll[v]

    def success(self, u: int, v: int) -> float:
        return (1.0 - self.loss(u, v)) * (1.0 - self._coll[v])

    def hop_latency(self, u: int, nbytes: int) -> float:
        lk = self.link
        t = lk.mac_overhead + (nbytes + lk.mac_header) * 8.0 / self.rate
        mean = lk.backoff_per_frame * self.load[u]
        if mean > 0:
            t += self.mac_rng.expovariate(1.0 / mean)
        self.frames_now[u] += 1
        self.frames += 1
        return t

    def unicast(self, u: int, v: int, nbytes: int, now: float) -> Optional[float]:
        reachable = v in self._sets[u]
        ok = self.success(u, v) if reachable else 0.0
        t = now
        for _ in range(self.link.max_retries + 1):
            t += self.hop_latency(u, nbytes)
            if reachable and self.rng.random() < ok:
                return t
        return None

    def broadcast(self, u: int, nbytes: int, now: float) -> List[Tuple[int, float]]:
        t = now + self.hop_latency(u, nbytes)
        out = []
        for v in self.adj[u]:
            if self.rng.random() < self.success(u, v):
                out.append((v, t))
        return out


def connected_components(adj: Sequence[Sequence[int]]) -> List[List[int]]:
    seen = set()
    comps = []
    for s in range(len(adj)):
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        stack = [s]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps
