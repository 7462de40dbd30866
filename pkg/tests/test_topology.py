from fractions import Fraction
from math import comb

import numpy as np
import pytest

from dflsim import topology
from dflsim.topology import TopologyGraph


def test_fully_connected():
    g3 = topology.fully_connected(3)
    assert len(g3.edges) == 3
    g10 = topology.fully_connected(10)
    assert len(g10.edges) == 45
    assert all(g10.degree(i) == 9 for i in range(10))
    assert all(g10.has_edge(i, j) for i in range(10) for j in range(i + 1, 10))
    with pytest.raises(ValueError):
        topology.fully_connected(1)


def test_ring():
    g = topology.ring(3)
    assert len(g.edges) == 3
    g10 = topology.ring(10)
    assert len(g10.edges) == 10
    assert all(g10.degree(i) == 2 for i in range(10))
    # connected single cycle: walk from 0 along unused edges covers all nodes
    seen = {0}
    prev, cur = None, 0
    for _ in range(10):
        nxt = [v for v in g10.neighbors(cur) if v != prev]
        prev, cur = cur, nxt[0]
        seen.add(cur)
    assert seen == set(range(10))
    with pytest.raises(ValueError):
        topology.ring(2)


def test_star():
    g = topology.star(10, hub=0)
    assert len(g.edges) == 9
    assert g.degree(0) == 9
    assert all(g.degree(i) == 1 for i in range(1, 10))
    # removing the hub disconnects all leaves
    assert all(g.neighbors(i) == [0] for i in range(1, 10))
    with pytest.raises(ValueError):
        topology.star(5, hub=7)


def test_graph_invariants():
    with pytest.raises(ValueError):
        TopologyGraph(3, frozenset({(1, 1)}))
    with pytest.raises(ValueError):
        TopologyGraph(3, frozenset({(2, 1)}))
    with pytest.raises(ValueError):
        TopologyGraph(3, frozenset({(0, 3)}))


def test_watts_strogatz_p0_is_lattice():
    g = topology.watts_strogatz(10, 2, 0.0, seed=0)
    assert g.edges == topology.ring(10).edges
    g4 = topology.watts_strogatz(12, 4, 0.0, seed=0)
    assert all(g4.degree(i) == 4 for i in range(12))


def test_watts_strogatz_edge_count_invariant_bulk():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(6, 24))
        k = int(rng.choice([2, 4]))
        if k >= n:
            k = 2
        p = float(rng.random())
        seed = int(rng.integers(2 ** 32))
        g = topology.watts_strogatz(n, k, p, seed)
        assert len(g.edges) == n * k // 2, (n, k, p, seed)
        assert all(0 <= a < b < n for a, b in g.edges)


def _ws_oracle(n: int, k: int, p: float, seed: int) -> set[tuple[int, int]]:
    """Independent reimplementation consuming the same seed stream.

    Tracks edges as a set of sorted tuples instead of adjacency lists; must
    produce the identical graph for the identical draw sequence.
    """
    rng = np.random.default_rng(seed)
    edges = set()
    for offset in range(1, k // 2 + 1):
        for i in range(n):
            edges.add(tuple(sorted((i, (i + offset) % n))))

    def degree(v):
        return sum(1 for e in edges if v in e)

    for offset in range(1, k // 2 + 1):
        for i in range(n):
            if rng.random() >= p:
                continue
            if degree(i) >= n - 1:
                continue
            old = tuple(sorted((i, (i + offset) % n)))
            if old not in edges:
                continue
            while True:
                w = int(rng.integers(n))
                if w != i and tuple(sorted((i, w))) not in edges:
                    break
            edges.discard(old)
            edges.add(tuple(sorted((i, w))))
    return edges


def test_watts_strogatz_matches_reference_oracle():
    for seed in range(20):
        g = topology.watts_strogatz(20, 4, 1.0, seed=seed)
        assert set(g.edges) == _ws_oracle(20, 4, 1.0, seed)
    g = topology.watts_strogatz(15, 6, 0.3, seed=7)
    assert set(g.edges) == _ws_oracle(15, 6, 0.3, 7)


def test_watts_strogatz_deterministic_and_validated():
    a = topology.watts_strogatz(20, 4, 0.5, seed=3)
    b = topology.watts_strogatz(20, 4, 0.5, seed=3)
    assert a.edges == b.edges
    for bad in [(10, 3, 0.5), (10, 10, 0.5), (4, 2, 1.5)]:
        with pytest.raises(ValueError):
            topology.watts_strogatz(bad[0], bad[1], bad[2], seed=0)


def test_exposure_pmf_point_masses():
    pmf0 = topology.malicious_exposure_pmf(10, 0, 3)
    assert pmf0[0] == 1.0 and pmf0[1:].sum() == 0.0
    pmf_all = topology.malicious_exposure_pmf(10, 9, 2)
    assert pmf_all[2] == 1.0 and pmf_all[:2].sum() == 0.0


def test_exposure_pmf_worked_example():
    pmf = topology.malicious_exposure_pmf(10, 3, 2)
    assert pmf[0] == pytest.approx(15 / 36)
    assert pmf[1] == pytest.approx(18 / 36)
    assert pmf[2] == pytest.approx(3 / 36)


def test_exposure_pmf_exact_oracle_all_small_cases():
    """Exact rational-arithmetic oracle over every (n <= 12, m, d)."""
    for n in range(2, 13):
        for m in range(0, n):
            for d in range(1, n):
                pmf = topology.malicious_exposure_pmf(n, m, d)
                assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
                denom = comb(n - 1, d)
                for x in range(d + 1):
                    expected = Fraction(comb(m, x) * comb(n - 1 - m, d - x), denom)
                    assert pmf[x] == pytest.approx(float(expected), abs=1e-15)


def test_exposure_pmf_matches_monte_carlo():
    n, m, d = 10, 3, 4
    pmf = topology.malicious_exposure_pmf(n, m, d)
    rng = np.random.default_rng(6)
    trials = 100000
    others = np.arange(n - 1)
    malicious = set(range(m))
    counts = np.zeros(d + 1)
    for _ in range(trials):
        picked = rng.choice(others, size=d, replace=False)
        counts[sum(1 for v in picked if v in malicious)] += 1
    freq = counts / trials
    for x in range(d + 1):
        sigma = np.sqrt(pmf[x] * (1 - pmf[x]) / trials)
        assert abs(freq[x] - pmf[x]) <= 3 * sigma + 1e-12


def test_exposure_pmf_validation():
    with pytest.raises(ValueError):
        topology.malicious_exposure_pmf(10, 10, 2)
    with pytest.raises(ValueError):
        topology.malicious_exposure_pmf(10, 3, 0)
