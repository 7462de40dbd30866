"""Overlay graph construction and the malicious-exposure analysis.

Graphs are simple and undirected: a set of unordered id pairs over nodes
0..n-1. Instances are immutable; rewiring produces new graphs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from math import comb

import numpy as np


@dataclass(frozen=True)
class TopologyGraph:
    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < b < self.n):
                raise ValueError(f"edge ({a}, {b}) not normalized or out of range")

    def neighbors(self, node: int) -> list[int]:
        out = [b if a == node else a for a, b in self.edges if node in (a, b)]
        return sorted(out)

    def degree(self, node: int) -> int:
        return len(self.neighbors(node))

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def snapshot_hash(self) -> str:
        text = f"{self.n}|" + ",".join(f"{a}-{b}" for a, b in sorted(self.edges))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def fully_connected(n: int) -> TopologyGraph:
    if n < 2:
        raise ValueError("fully connected graph needs n >= 2")
    edges = frozenset((i, j) for i in range(n) for j in range(i + 1, n))
    return TopologyGraph(n, edges)


def ring(n: int) -> TopologyGraph:
    if n < 3:
        raise ValueError("ring needs n >= 3")
    edges = frozenset(_edge(i, (i + 1) % n) for i in range(n))
    return TopologyGraph(n, edges)


def star(n: int, hub: int = 0) -> TopologyGraph:
    if n < 2:
        raise ValueError("star needs n >= 2")
    if not 0 <= hub < n:
        raise ValueError(f"hub {hub} out of range for n={n}")
    edges = frozenset(_edge(hub, j) for j in range(n) if j != hub)
    return TopologyGraph(n, edges)


def watts_strogatz(n: int, k: int, p: float, seed: int) -> TopologyGraph:
    """Small-world graph: ring lattice of degree k with random rewiring.

    Start from the lattice where every node connects to k/2 neighbors on each
    side. Visit lattice edges in order (offset 1..k/2, then node 0..n-1) and,
    with probability p, move the far endpoint to a uniformly drawn node that
    is neither the source nor already adjacent to it. Rewiring conserves the
    edge count, so the average degree is exactly k.

    Args:
        n: node count, must exceed k.
        k: even lattice degree >= 2.
        p: rewiring probability in [0, 1].
        seed: RNG stream for the (coin, target) draws.
    """
    if k < 2 or k % 2 != 0:
        raise ValueError(f"k must be even and >= 2, got {k}")
    if n <= k:
        raise ValueError(f"need n > k, got n={n}, k={k}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")

    rng = np.random.default_rng(seed)
    adjacency: list[set[int]] = [set() for _ in range(n)]
    for offset in range(1, k // 2 + 1):
        for i in range(n):
            j = (i + offset) % n
            adjacency[i].add(j)
            adjacency[j].add(i)

    for offset in range(1, k // 2 + 1):
        for i in range(n):
            if rng.random() >= p:
                continue
            if len(adjacency[i]) >= n - 1:
                continue  # saturated: no legal rewiring target
            old = (i + offset) % n
            if old not in adjacency[i]:
                continue  # far endpoint already moved by an earlier rewire
            while True:
                new = int(rng.integers(n))
                if new != i and new not in adjacency[i]:
                    break
            adjacency[i].discard(old)
            adjacency[old].discard(i)
            adjacency[i].add(new)
            adjacency[new].add(i)

    edges = frozenset(_edge(i, j) for i in range(n) for j in adjacency[i] if i < j)
    return TopologyGraph(n, edges)


def malicious_exposure_pmf(n: int, m: int, d: int) -> np.ndarray:
    """Hypergeometric PMF of a benign node's malicious-neighbor count.

    A benign node with d neighbors drawn from the other n-1 nodes, m of which
    are malicious: P(X=x) = C(m,x) C(n-1-m, d-x) / C(n-1, d) for x in 0..d.
    """
    if not 0 <= m <= n - 1:
        raise ValueError(f"need 0 <= m <= n-1, got m={m}, n={n}")
    if not 1 <= d <= n - 1:
        raise ValueError(f"need 1 <= d <= n-1, got d={d}")
    denom = comb(n - 1, d)
    pmf = np.zeros(d + 1)
    for x in range(d + 1):
        if x <= m and d - x <= n - 1 - m:
            pmf[x] = comb(m, x) * comb(n - 1 - m, d - x) / denom
    return pmf
