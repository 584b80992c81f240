import itertools

import numpy as np
import pytest

from conftest import prob_rows
from gridlink.coresel import CoreSet, DeltaEstimate, edge_weights, estimate_delta, select_core, verify_cover
from gridlink.graphio import Graph, GraphError, generate_synthetic
from gridlink.simkit import similarity


def brute_force_cover(n, edges):
    for k in range(n + 1):
        for combo in itertools.combinations(range(n), k):
            s = set(combo)
            if all(u in s or v in s for u, v in edges):
                return k
    return n


def test_triangle_cover():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    preds = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3]])
    core = select_core(g, preds, -10.0)
    ok, missing = verify_cover(g, core)
    assert ok and missing == []
    assert len(core) == 2


def test_star_center_chosen():
    g = Graph.from_edges(5, [(0, k) for k in range(1, 5)])
    preds = np.array([[0.9, 0.1]] * 5)
    core = select_core(g, preds, 0.0)
    assert core.members.tolist() == [0]


def test_threshold_drops_edges():
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    preds = np.array([[0.9, 0.1], [0.85, 0.15], [0.9, 0.1], [0.1, 0.9]])
    w = edge_weights(g, preds)
    assert w[0] > 0 > w[1]
    core = select_core(g, preds, 0.0)
    assert core.covered_edges.tolist() == [0]
    assert core.dropped_edges.tolist() == [1]
    assert len(core) == 1 and not ({2, 3} & set(core.members.tolist()))


def test_degree_tie_goes_to_lower_id():
    g = Graph.from_edges(2, [(0, 1)])
    preds = np.array([[0.7, 0.3], [0.7, 0.3]])
    assert select_core(g, preds, 0.0).members.tolist() == [0]


def test_weighted_degree_decides():
    # node 2 has two strong edges, node 1 only one
    g = Graph.from_edges(4, [(1, 2), (2, 3), (0, 1)])
    preds = np.array([[0.1, 0.9], [0.8, 0.2], [0.8, 0.2], [0.8, 0.2]])
    core = select_core(g, preds, 1.5)
    assert core.members.tolist() == [2]


def test_verify_cover_reports_missing():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    preds = np.array([[0.9, 0.1]] * 3)
    core = select_core(g, preds, 0.0)
    broken = CoreSet(np.array([0]), core.delta, core.degrees, core.weights,
                     core.covered_edges, core.dropped_edges)
    ok, missing = verify_cover(g, broken)
    assert not ok and missing == [(1, 2)]
    with pytest.raises(ValueError):
        verify_cover(Graph.from_edges(3, [(0, 1)]), core)


def test_cover_is_exact_and_small(rng):
    for _ in range(60):
        n = int(rng.integers(3, 9))
        edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.4]
        g = Graph.from_edges(n, edges)
        preds = prob_rows(rng, n, 3)
        core = select_core(g, preds, -2.0)
        assert verify_cover(g, core)[0]
        # never more than every non-isolated node
        assert len(core) <= max(1, len({x for e in edges for x in e}))
        assert len(core) >= brute_force_cover(n, edges)


def test_contains_and_mask():
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    core = select_core(g, np.array([[0.9, 0.1]] * 4), 0.0)
    assert 0 in core and 1 not in core
    assert core.mask(4).tolist() == [True, False, True, False]


def test_delta_path_example():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    preds = np.array([[0.9, 0.1], [0.6, 0.4], [0.3, 0.7], [0.2, 0.8]])
    d = estimate_delta(g, preds, 2)
    want = (similarity(preds[0], preds[2]) + similarity(preds[1], preds[3])) / 2
    assert d.value == pytest.approx(want)
    assert d.source == "n_hop" and d.num_pairs == 2 and not d.fallback
    assert float(d) == d.value


def test_delta_falls_back_to_non_adjacent():
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    preds = np.array([[0.9, 0.1], [0.6, 0.4], [0.3, 0.7], [0.2, 0.8]])
    d = estimate_delta(g, preds, 2)
    assert d.source == "non_adjacent" and d.num_pairs == 4
    pairs = [(0, 2), (0, 3), (1, 2), (1, 3)]
    assert d.value == pytest.approx(np.mean([similarity(preds[a], preds[b]) for a, b in pairs]))


def test_delta_complete_graph_uses_edges():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    preds = np.array([[0.9, 0.1], [0.6, 0.4], [0.3, 0.7]])
    d = estimate_delta(g, preds, 2)
    assert d.source == "edges" and d.num_pairs == 3


def test_delta_errors():
    g = Graph.from_edges(2, [(0, 1)])
    with pytest.raises(GraphError, match="insufficient"):
        estimate_delta(g, np.array([[0.9, 0.1], [0.2, 0.8]]), 2)
    with pytest.raises(ValueError):
        estimate_delta(g, np.zeros((2, 2)), 1)


def test_delta_estimate_carries_meta(tmp_path):
    g, _ = generate_synthetic(0, 3, 12, 0.3, 0.02)
    preds = prob_rows(np.random.default_rng(1), g.num_nodes, 3)
    d = estimate_delta(g, preds, 3, 100, 0)
    assert isinstance(d, DeltaEstimate)
    core = select_core(g, preds, d)
    assert core.delta == d.value and core.meta["n"] == 3
    core.write(tmp_path / "c.csv", tmp_path / "c.json")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "node_id" and [int(x) for x in lines[1:]] == core.members.tolist()
