from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmkhyper.extract import (
    Hypergraph,
    SpatialGraph,
    active_triangles,
    enumerate_triangles,
    graph_from_field,
    hypergraph_from_graph,
    skeleton,
)
from dmkhyper.mesh import triangulate_unit_square

from oracles import brute_triangles, random_graph, random_hypergraph


def test_uniform_field_keeps_everything():
    m = triangulate_unit_square(4)
    g = graph_from_field(m, np.full(m.n_triangles, 3.0), 0.99)
    assert g.n_nodes == m.n_vertices
    assert g.edges == {tuple(e) for e in m.edges.tolist()}


def test_single_active_triangle():
    m = triangulate_unit_square(4)
    mu = np.full(m.n_triangles, 1e-6)
    mu[5] = 1.0
    g = graph_from_field(m, mu, 0.5)
    assert g.n_nodes == 3 and g.n_edges == 3
    assert set(g.nodes) == set(m.triangles[5].tolist())


@pytest.mark.parametrize("seed", range(5))
def test_activation_matches_exhaustive_scan(seed):
    m = triangulate_unit_square(4)
    mu = np.random.default_rng(seed).random(m.n_triangles)
    g = graph_from_field(m, mu, 0.5)
    nodes, edges = set(), set()
    top = max(mu)
    for t in range(m.n_triangles):
        if mu[t] >= 0.5 * top:
            tri = sorted(m.triangles[t].tolist())
            nodes.update(tri)
            edges.update(combinations(tri, 2))
    assert set(g.nodes) == nodes
    assert g.edges == edges
    for v in nodes:
        assert g.nodes[v] == tuple(m.vertices[v])


def test_zero_field_rejected():
    m = triangulate_unit_square(2)
    with pytest.raises(ValueError):
        graph_from_field(m, np.zeros(m.n_triangles))


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.5])
def test_ratio_out_of_range_rejected(ratio):
    with pytest.raises(ValueError):
        active_triangles(np.ones(4), ratio)


def test_triangle_lift_examples():
    k3 = SpatialGraph({0: (0, 0), 1: (1, 0), 2: (0, 1)}, frozenset({(0, 1), (1, 2), (0, 2)}))
    h = hypergraph_from_graph(k3)
    assert len(h.hyperedges) == 4 and h.triangles() == [(0, 1, 2)]
    path = SpatialGraph({0: (0, 0), 1: (1, 0), 2: (2, 0)}, frozenset({(0, 1), (1, 2)}))
    h = hypergraph_from_graph(path)
    assert len(h.hyperedges) == 2 and h.triangles() == []


@pytest.mark.parametrize("seed", range(10))
def test_triangles_match_cubic_scan(seed):
    g = random_graph(np.random.default_rng(seed), 12, 0.4)
    assert enumerate_triangles(g) == brute_triangles(g)
    h = hypergraph_from_graph(g)
    assert h.triangles() == brute_triangles(g)


def test_skeleton_of_single_triangle():
    h = Hypergraph({1: (0, 0), 2: (1, 0), 3: (0, 1)}, frozenset({(1, 2, 3)}))
    assert skeleton(h).edges == {(1, 2), (2, 3), (1, 3)}


@pytest.mark.parametrize("seed", range(10))
def test_skeleton_matches_pair_enumeration(seed):
    h = random_hypergraph(np.random.default_rng(seed), 10, 8, 5)
    pairs = set()
    for e in h.hyperedges:
        for i in range(len(e)):
            for j in range(i + 1, len(e)):
                pairs.add((min(e[i], e[j]), max(e[i], e[j])))
    assert skeleton(h).edges == pairs


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 14), st.floats(0.0, 1.0))
def test_round_trip_and_triangle_soundness(seed, n, p):
    g = random_graph(np.random.default_rng(seed), n, p)
    h = hypergraph_from_graph(g)
    assert skeleton(h) == g
    sk = skeleton(h)
    assert set(h.triangles()) == set(brute_triangles(sk))
    for t in h.triangles():
        for pair in combinations(t, 2):
            assert pair in h.hyperedges


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_lower_threshold_never_removes(seed, r1, r2):
    lo, hi = sorted((r1, r2))
    m = triangulate_unit_square(5)
    mu = np.random.default_rng(seed).random(m.n_triangles) + 1e-3
    a = graph_from_field(m, mu, lo)
    b = graph_from_field(m, mu, hi)
    assert set(b.nodes) <= set(a.nodes)
    assert b.edges <= a.edges


def test_json_is_canonical_and_round_trips():
    g = random_graph(np.random.default_rng(1), 8, 0.5)
    h = hypergraph_from_graph(g)
    text = h.to_json()
    back = Hypergraph.from_json(text)
    assert back == h
    assert back.to_json() == text
    data = h.to_dict()
    assert data["hyperedges"] == sorted(data["hyperedges"])


@pytest.mark.parametrize(
    "edges",
    [frozenset({(0,)}), frozenset({(0, 1, 2, 3)}), frozenset({(0, 0)}), frozenset({(0, 9)})],
)
def test_invalid_hyperedges_rejected(edges):
    with pytest.raises(ValueError):
        Hypergraph({i: (0.0, 0.0) for i in range(4)}, edges)


def test_graph_rejects_self_loop_and_dangling_edge():
    with pytest.raises(ValueError):
        SpatialGraph({0: (0, 0)}, frozenset({(0, 0)}))
    with pytest.raises(ValueError):
        SpatialGraph({0: (0, 0)}, frozenset({(0, 1)}))
