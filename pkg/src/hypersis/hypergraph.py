"""Weighted directed hypergraphs, their adjacency tensors, and random generators.

A hyperedge has a single tail (the agent that can become infected) and one or more
heads (the agents whose joint infection can infect the tail). Vertex indices are
0-based in memory and 1-based in the JSON file format.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .tensor import SparseCubicalTensor

__all__ = [
    "Hyperedge",
    "DirectedHypergraph",
    "adjacency_tensors",
    "pairwise_strongly_connected",
    "random_ba_hypergraph",
    "cycle_hypergraph",
    "cycle_triples",
    "five_agent_hypergraph",
]


@dataclass(frozen=True)
class Hyperedge:
    tail: int
    heads: tuple[int, ...]
    weight: float = 1.0

    def __post_init__(self):
        heads = tuple(sorted(int(h) for h in self.heads))
        object.__setattr__(self, "tail", int(self.tail))
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "weight", float(self.weight))
        if not heads:
            raise ValueError("a hyperedge needs at least one head")
        if len(set(heads)) != len(heads):
            raise ValueError(f"duplicate heads in {heads}")
        if self.tail in heads:
            raise ValueError(f"tail {self.tail} cannot also be a head")
        if not (self.weight > 0 and np.isfinite(self.weight)):
            raise ValueError(f"hyperedge weight must be positive and finite, got {self.weight}")

    @property
    def order(self) -> int:
        return 1 + len(self.heads)


@dataclass(frozen=True)
class DirectedHypergraph:
    n: int
    edges: tuple[Hyperedge, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a hypergraph needs at least one vertex")
        edges = tuple(
            e if isinstance(e, Hyperedge) else Hyperedge(*e) for e in self.edges
        )
        for e in edges:
            if not (0 <= e.tail < self.n and all(0 <= h < self.n for h in e.heads)):
                raise ValueError(f"vertex index out of range in {e}")
        object.__setattr__(self, "edges", edges)

    @property
    def max_order(self) -> int:
        return max((e.order for e in self.edges), default=2)

    def edges_of_order(self, order: int) -> list[Hyperedge]:
        return [e for e in self.edges if e.order == order]

    # -- JSON (1-based) ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "edges": [
                {"tail": e.tail + 1, "heads": [h + 1 for h in e.heads], "weight": e.weight}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> DirectedHypergraph:
        try:
            n = int(data["n"])
            edges = [
                Hyperedge(int(e["tail"]) - 1, [int(h) - 1 for h in e["heads"]], float(e["weight"]))
                for e in data["edges"]
            ]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed hypergraph document: {exc}") from exc
        return cls(n, tuple(edges))

    def dumps(self) -> str:
        # repr-exact floats keep the round trip bit-exact
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> DirectedHypergraph:
        return cls.from_dict(json.loads(Path(path).read_text()))


def adjacency_tensors(H: DirectedHypergraph, max_order: int | None = None) -> dict[int, SparseCubicalTensor]:
    """Aggregate hyperedge weights into one adjacency tensor per order.

    An edge of order ``m`` writes its full weight at every permutation of its heads
    (no division by the permutation count), so ``(0; 3, 4; w)`` yields
    ``A3[0, 3, 4] = A3[0, 4, 3] = w``. Parallel edges add up.
    """
    if max_order is None:
        max_order = max(2, H.max_order)
    if not 2 <= max_order <= max(H.n, 2):
        raise ValueError(f"max_order must be in [2, {H.n}], got {max_order}")
    too_big = [e for e in H.edges if e.order > max_order]
    if too_big:
        raise ValueError(f"hypergraph has edges of order {too_big[0].order} > max_order={max_order}")
    out = {}
    for m in range(2, max_order + 1):
        idx, vals = [], []
        for e in H.edges_of_order(m):
            for perm in itertools.permutations(e.heads):
                idx.append((e.tail, *perm))
                vals.append(e.weight)
        out[m] = SparseCubicalTensor(m, H.n, np.array(idx, dtype=np.int64).reshape(-1, m), vals)
    return out


def _pairwise_matrix(H: DirectedHypergraph) -> csr_matrix:
    pairs = H.edges_of_order(2)
    rows = [e.tail for e in pairs]
    cols = [e.heads[0] for e in pairs]
    return csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(H.n, H.n))


def pairwise_strongly_connected(H: DirectedHypergraph) -> bool:
    """True iff the digraph formed by the order-2 edges is strongly connected."""
    if H.n == 1:
        return True
    ncomp, _ = connected_components(_pairwise_matrix(H), directed=True, connection="strong")
    return ncomp == 1


def _ba_edges(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    # (m+1)-clique seed, then degree-proportional attachment; repeated draws are redrawn
    edges = list(itertools.combinations(range(m + 1), 2))
    targets_pool = [v for e in edges for v in e]
    for new in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(targets_pool[rng.integers(len(targets_pool))])
        for t in sorted(chosen):
            edges.append((t, new))
            targets_pool.extend((t, new))
    return edges


def random_ba_hypergraph(n: int, m: int, n_triples: int, seed: int) -> DirectedHypergraph:
    """Barabási–Albert pairwise layer plus uniformly random third-order edges.

    Every undirected BA edge becomes two opposite unit-weight arcs, so the pairwise
    layer is strongly connected. Each triple has a uniformly random tail and a
    uniformly random pair of distinct heads different from the tail; duplicate
    triples are kept (their weights add up in the tensor).
    """
    if m < 1 or n < m + 1 or (n < 3 and n_triples):
        raise ValueError(f"need n >= m + 1 >= 2 (and n >= 3 for triples), got n={n}, m={m}")
    if n_triples < 0:
        raise ValueError("n_triples must be nonnegative")
    rng = np.random.default_rng(seed)
    edges = []
    for a, b in _ba_edges(n, m, rng):
        edges.append(Hyperedge(a, (b,)))
        edges.append(Hyperedge(b, (a,)))
    for _ in range(n_triples):
        tail = int(rng.integers(n))
        others = [v for v in range(n) if v != tail]
        j, k = rng.choice(others, size=2, replace=False)
        edges.append(Hyperedge(tail, (int(j), int(k))))
    return DirectedHypergraph(n, tuple(edges))


def cycle_hypergraph(n: int, triples: Iterable[Sequence[int]] = ()) -> DirectedHypergraph:
    """Directed cycle ``0 -> 1 -> ... -> n-1 -> 0`` with unit weights, plus triples.

    The cycle arc ``i -> i+1`` is the pairwise edge with tail ``i`` and head ``i+1``.
    ``triples`` are ``(tail, head, head)`` tuples, also with unit weight.
    """
    if n < 3:
        raise ValueError("cycle_hypergraph needs n >= 3")
    edges = [Hyperedge(i, ((i + 1) % n,)) for i in range(n)]
    for t in triples:
        if len(t) != 3:
            raise ValueError(f"a triple is (tail, head, head), got {t}")
        tail, j, k = (int(v) for v in t)
        edges.append(Hyperedge(tail, (j, k)))
    return DirectedHypergraph(n, tuple(edges))


def cycle_triples(n: int) -> list[tuple[int, int, int]]:
    """One triple per tail: ``(i; i+1, i+2)`` modulo ``n``."""
    return [(i, (i + 1) % n, (i + 2) % n) for i in range(n)]


_EXAMPLE_PAIRS = [(1, 4, 0.4896), (2, 1, 0.1925), (2, 3, 0.1231), (3, 1, 0.2055),
                  (3, 4, 0.1465), (4, 5, 0.1891), (5, 2, 0.0427), (5, 3, 0.6352)]
_EXAMPLE_TRIPLES = [(1, 4, 5, 0.2819), (2, 1, 5, 0.5386), (3, 1, 2, 0.6952),
                    (4, 1, 2, 0.4991), (5, 3, 4, 0.5358)]


def five_agent_hypergraph(unit_weights: bool = False) -> DirectedHypergraph:
    """Fixed 5-agent hypergraph with 8 pairwise edges and 5 triples (one per tail)."""
    edges = [Hyperedge(i - 1, (j - 1,), 1.0 if unit_weights else w) for i, j, w in _EXAMPLE_PAIRS]
    edges += [
        Hyperedge(i - 1, (j - 1, k - 1), 1.0 if unit_weights else w)
        for i, j, k, w in _EXAMPLE_TRIPLES
    ]
    return DirectedHypergraph(5, tuple(edges))
