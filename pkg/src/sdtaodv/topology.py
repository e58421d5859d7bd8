"""Trust-annotated connectivity graph shared by the controller and path search."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Set, Tuple

Edge = FrozenSet[int]


def edge(a: int, b: int) -> Edge:
    return frozenset((a, b))


@dataclass
class TopologySnapshot:
    """Undirected adjacency plus directed link trust.

    ``link_trust[(u, v)]`` is u's trust in v, i.e. the trust of the hop u -> v
    in the direction of travel. Missing entries fall back to ``default_trust``.
    """

    nodes: Set[int] = field(default_factory=set)
    edges: Set[Edge] = field(default_factory=set)
    link_trust: Dict[Tuple[int, int], float] = field(default_factory=dict)
    as_of: float = 0.0
    default_trust: float = 0.5

    def __post_init__(self) -> None:
        self._adj: Dict[int, list] | None = None

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[Tuple[int, int]],
        trust: Dict[Tuple[int, int], float] | None = None,
        nodes: Iterable[int] = (),
        symmetric_trust: bool = False,
        **kw,
    ) -> "TopologySnapshot":
        snap = cls(**kw)
        snap.nodes.update(nodes)
        for a, b in edges:
            snap.nodes.update((a, b))
            snap.edges.add(edge(a, b))
        for (u, v), t in (trust or {}).items():
            snap.link_trust[(u, v)] = t
            if symmetric_trust:
                snap.link_trust[(v, u)] = t
        snap.validate()
        return snap

    def validate(self) -> None:
        for e in self.edges:
            if len(e) != 2:
                raise ValueError(f"self-loop edge {set(e)}")
            if not e <= self.nodes:
                raise ValueError(f"edge {sorted(e)} references unknown node")
        for (u, v), t in self.link_trust.items():
            if edge(u, v) not in self.edges:
                raise ValueError(f"trust for ({u}, {v}) has no matching edge")
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"trust for ({u}, {v}) out of range: {t}")

    def adjacency(self) -> Dict[int, list]:
        if self._adj is None:
            adj: Dict[int, list] = {n: [] for n in self.nodes}
            for e in self.edges:
                a, b = tuple(e)
                adj[a].append(b)
                adj[b].append(a)
            for n in adj:
                adj[n].sort()
            self._adj = adj
        return self._adj

    def neighbors(self, u: int) -> list:
        return self.adjacency().get(u, [])

    def trust(self, u: int, v: int) -> float:
        return self.link_trust.get((u, v), self.default_trust)

    def has_edge(self, a: int, b: int) -> bool:
        return edge(a, b) in self.edges

    def path_trust(self, path) -> float:
        value = 1.0
        for u, v in zip(path, path[1:]):
            value = self.trust(u, v) * value
        return value

    def edge_pairs(self) -> list:
        return sorted(tuple(sorted(e)) for e in self.edges)
