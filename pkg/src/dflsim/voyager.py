"""Moving-target defense: rewire the overlay away from suspicious neighbors.

Three stages per round: flag anomalous received models (cosine similarity to
the own model below a threshold), rank non-neighbors by reputation to find
replacement peers, and deploy the edge changes at the round barrier. The
dropped edge disappears for both endpoints; replacements keep the node's
degree steady when candidates are available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import params
from .params import ModelParams
from .topology import TopologyGraph, _edge

DEFAULT_ANOMALY_TAU = 0.3


@dataclass
class ReputationTable:
    """Running mean of observed model similarity per observed node."""

    means: dict[int, float] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)

    def update(self, observed: int, similarity: float) -> None:
        if not -1.0 <= similarity <= 1.0:
            raise ValueError(f"similarity {similarity} outside [-1, 1]")
        c = self.counts.get(observed, 0)
        mean = self.means.get(observed, 0.0)
        self.means[observed] = (mean * c + similarity) / (c + 1)
        self.counts[observed] = c + 1

    def observed(self, node: int) -> bool:
        return node in self.counts


def detect_anomalies(own: ModelParams, received: list[tuple[int, ModelParams]],
                     tau: float) -> set[int]:
    """Flag node j iff cos(own, model_j) over flattened parameters is below tau."""
    own_flat = params.flatten(own)
    flagged = set()
    for node_id, model in received:
        if params.cosine_similarity(own_flat, params.flatten(model)) < tau:
            flagged.add(node_id)
    return flagged


def explore_candidates(topology: TopologyGraph, me: int, reputation: ReputationTable,
                       k: int, seed: int) -> list[int]:
    """Top-k non-neighbors by reputation; unobserved ones rank last in seeded
    random order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    neighbor_set = set(topology.neighbors(me))
    pool = [v for v in range(topology.n) if v != me and v not in neighbor_set]
    known = sorted((v for v in pool if reputation.observed(v)),
                   key=lambda v: (-reputation.means[v], v))
    unknown = [v for v in pool if not reputation.observed(v)]
    rng = np.random.default_rng(seed)
    rng.shuffle(unknown)
    ranked = known + list(unknown)
    return ranked[:k]


def deploy_connections(topology: TopologyGraph, me: int, drop: set[int],
                       add: list[int]) -> TopologyGraph:
    """New graph with (me, d) edges removed and (me, a) edges added."""
    neighbor_set = set(topology.neighbors(me))
    bad_drop = set(drop) - neighbor_set
    if bad_drop:
        raise ValueError(f"cannot drop non-neighbors {sorted(bad_drop)}")
    overlap = set(add) & neighbor_set
    if overlap:
        raise ValueError(f"cannot add existing neighbors {sorted(overlap)}")
    if me in add or me in drop:
        raise ValueError("node cannot rewire an edge to itself")
    if len(set(add)) != len(add):
        raise ValueError("duplicate targets in add list")
    edges = set(topology.edges)
    for d in drop:
        edges.discard(_edge(me, d))
    for a in add:
        edges.add(_edge(me, a))
    return TopologyGraph(topology.n, frozenset(edges))


def plan_rewiring(topology: TopologyGraph, me: int, flagged: set[int],
                  reputation: ReputationTable, seed: int) -> tuple[set[int], list[int]]:
    """Replacement policy: drop all flagged neighbors, request one candidate per
    dropped edge. Returns (drop, add); both empty when nothing was flagged."""
    drop = set(flagged) & set(topology.neighbors(me))
    if not drop:
        return set(), []
    add = explore_candidates(topology, me, reputation, len(drop), seed)
    return drop, add
