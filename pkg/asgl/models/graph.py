from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Optional

from pydantic import BaseModel

from asgl.exceptions import DomainError


class Sign(IntEnum):
    """Edge sign: trust/friend (+1) or distrust/foe (-1)."""

    POSITIVE = 1
    NEGATIVE = -1

    def __str__(self) -> str:
        return "+1" if self is Sign.POSITIVE else "-1"

    @property
    def symbol(self) -> str:
        return "+" if self is Sign.POSITIVE else "-"

    @classmethod
    def from_value(cls, value: float) -> "Sign":
        """Map a nonzero number to its sign."""
        if value > 0:
            return cls.POSITIVE
        if value < 0:
            return cls.NEGATIVE
        raise DomainError("zero has no sign")

    @classmethod
    def from_string(cls, sign_str: str) -> "Sign":
        """Convert '+', '-', '1', '-1', 'positive' or 'negative' to a Sign."""
        normalized = sign_str.strip().lower()
        if normalized in {"+", "+1", "1", "pos", "positive"}:
            return cls.POSITIVE
        if normalized in {"-", "-1", "neg", "negative"}:
            return cls.NEGATIVE
        raise ValueError(f"Invalid sign: {sign_str}")


class WeightRule(str, Enum):
    """How raw edge weights are mapped to signs on ingest."""

    SIGN = "sign"
    SIGN_SKIP_ZERO = "sign-skip-zero"

    def __str__(self) -> str:
        return self.value


class IngestStats(BaseModel):
    """Counts collected while loading a raw edge list."""

    num_nodes: int = 0
    positive_edges: int = 0
    negative_edges: int = 0
    conflicts: int = 0
    duplicates: int = 0
    self_loops: int = 0
    skipped_zero: int = 0
    lines_read: int = 0


Edge = tuple[int, int]
SignedEdge = tuple[int, int, Sign]


@dataclass(frozen=True)
class SignedGraph:
    """Undirected signed graph over the dense node id range ``0..num_nodes-1``.

    ``original_ids[v]`` is the id node ``v`` carried in the raw input.
    Instances are immutable and safe to share read-only across threads.
    """

    num_nodes: int
    pos_adj: tuple[frozenset[int], ...]
    neg_adj: tuple[frozenset[int], ...]
    original_ids: tuple[int, ...] = ()
    ingest_stats: Optional[IngestStats] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if len(self.pos_adj) != self.num_nodes or len(self.neg_adj) != self.num_nodes:
            raise DomainError("adjacency length does not match num_nodes")
        if not self.original_ids:
            object.__setattr__(self, "original_ids", tuple(range(self.num_nodes)))
        elif len(self.original_ids) != self.num_nodes:
            raise DomainError("original_ids length does not match num_nodes")

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges: Iterable[SignedEdge],
        original_ids: tuple[int, ...] = (),
        ingest_stats: Optional[IngestStats] = None,
    ) -> "SignedGraph":
        """Build a graph from already-resolved signed edges, enforcing all invariants."""
        pos: list[set[int]] = [set() for _ in range(num_nodes)]
        neg: list[set[int]] = [set() for _ in range(num_nodes)]
        for u, v, sign in edges:
            if u == v:
                raise DomainError(f"self-loop on node {u}")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise DomainError(f"edge ({u}, {v}) outside node range 0..{num_nodes - 1}")
            same, other = (pos, neg) if sign is Sign.POSITIVE else (neg, pos)
            if v in other[u]:
                raise DomainError(f"pair ({u}, {v}) carries both signs")
            same[u].add(v)
            same[v].add(u)
        return cls(
            num_nodes=num_nodes,
            pos_adj=tuple(frozenset(s) for s in pos),
            neg_adj=tuple(frozenset(s) for s in neg),
            original_ids=original_ids,
            ingest_stats=ingest_stats,
        )

    def adjacency(self, sign: Sign) -> tuple[frozenset[int], ...]:
        return self.pos_adj if sign is Sign.POSITIVE else self.neg_adj

    def neighbors(self, v: int) -> frozenset[int]:
        """Neighbors of ``v`` of either sign."""
        return self.pos_adj[v] | self.neg_adj[v]

    def degree(self, v: int) -> int:
        return len(self.pos_adj[v]) + len(self.neg_adj[v])

    def edges(self, sign: Optional[Sign] = None) -> list[Edge]:
        """Undirected edges as ``(u, v)`` with ``u < v``, sorted."""
        signs = (Sign.POSITIVE, Sign.NEGATIVE) if sign is None else (sign,)
        result = []
        for s in signs:
            adj = self.adjacency(s)
            result.extend((u, v) for u in range(self.num_nodes) for v in adj[u] if u < v)
        return sorted(result)

    def signed_edges(self) -> list[SignedEdge]:
        """All edges with their signs, sorted by ``(u, v)``."""
        out = [(u, v, Sign.POSITIVE) for u, v in self.edges(Sign.POSITIVE)]
        out += [(u, v, Sign.NEGATIVE) for u, v in self.edges(Sign.NEGATIVE)]
        return sorted(out, key=lambda e: (e[0], e[1]))

    def num_edges(self, sign: Optional[Sign] = None) -> int:
        signs = (Sign.POSITIVE, Sign.NEGATIVE) if sign is None else (sign,)
        return sum(sum(len(a) for a in self.adjacency(s)) for s in signs) // 2

    def sign_of(self, u: int, v: int) -> Optional[Sign]:
        if v in self.pos_adj[u]:
            return Sign.POSITIVE
        if v in self.neg_adj[u]:
            return Sign.NEGATIVE
        return None

    def restrict(self, sign: Sign) -> "SignedGraph":
        """Same node set, only the edges of one sign."""
        empty = tuple(frozenset() for _ in range(self.num_nodes))
        if sign is Sign.POSITIVE:
            return SignedGraph(self.num_nodes, self.pos_adj, empty, self.original_ids)
        return SignedGraph(self.num_nodes, empty, self.neg_adj, self.original_ids)

    def without_node(self, node: int) -> "SignedGraph":
        """Node-level neighbor: ``node`` keeps its id but loses every incident edge."""
        if not 0 <= node < self.num_nodes:
            raise DomainError(f"node {node} outside node range")

        def drop(adj: tuple[frozenset[int], ...]) -> tuple[frozenset[int], ...]:
            return tuple(
                frozenset() if v == node else (a - {node} if node in a else a)
                for v, a in enumerate(adj)
            )

        return SignedGraph(self.num_nodes, drop(self.pos_adj), drop(self.neg_adj), self.original_ids)

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.num_nodes))


@dataclass(frozen=True)
class EdgeSplit:
    """Training graph plus held-out signed test edges."""

    train_graph: SignedGraph
    test_edges: tuple[SignedEdge, ...]

    def test_edges_of(self, sign: Sign) -> list[Edge]:
        return [(u, v) for u, v, s in self.test_edges if s is sign]
