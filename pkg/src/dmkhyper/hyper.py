"""s-adjacency, s-line graphs and the scalar graph/hypergraph metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numba
import numpy as np
import scipy.sparse as sp

from .extract import Hypergraph, SpatialGraph
from .mesh import triangle_area


@dataclass(frozen=True)
class SAdjacency:
    s: int
    node_ids: tuple
    matrix: np.ndarray


@dataclass(frozen=True)
class PropertyVector:
    name: str
    values: dict
    s: int = None


@dataclass(frozen=True)
class GraphProperties:
    edge_count: int
    avg_degree: float
    avg_closeness: float


@dataclass(frozen=True)
class HypergraphProperties:
    hyperedge_count: int
    triangle_count: int
    covered_area: float
    avg_s_degree: float
    avg_s_closeness: float


def shared_counts(h: Hypergraph) -> Counter:
    """Number of hyperedges shared by each node pair (pairs with zero omitted)."""
    counts = Counter()
    for e in h.hyperedges:
        counts.update(combinations(e, 2))
    return counts


def _check_s(s):
    if int(s) != s or s < 1:
        raise ValueError(f"s must be a positive integer, got {s!r}")


def s_adjacency(h: Hypergraph, s: int) -> SAdjacency:
    """Binary matrix marking node pairs that share at least ``s`` hyperedges.

    Rows and columns follow the sorted node ids.
    """
    _check_s(s)
    ids = h.node_ids()
    index = {v: i for i, v in enumerate(ids)}
    A = np.zeros((len(ids), len(ids)), dtype=np.int8)
    for (a, b), c in shared_counts(h).items():
        if c >= s:
            A[index[a], index[b]] = A[index[b], index[a]] = 1
    return SAdjacency(int(s), tuple(ids), A)


def s_line_graph(h: Hypergraph, s: int) -> SpatialGraph:
    _check_s(s)
    edges = frozenset(pair for pair, c in shared_counts(h).items() if c >= s)
    return SpatialGraph(dict(h.nodes), edges)


@numba.njit(cache=True)
def _harmonic_bfs(indptr, indices, n):
    out = np.zeros(n)
    dist = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    for src in range(n):
        dist[:] = -1
        dist[src] = 0
        queue[0] = src
        head, tail = 0, 1
        acc = 0.0
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v]
            if dv > 0:
                acc += 1.0 / dv
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
        out[src] = acc
    return out


def harmonic_closeness(g: SpatialGraph) -> PropertyVector:
    """Per-node ``sum_u 1/d(u, v)`` over reachable ``u != v``; isolated nodes score 0."""
    ids = g.node_ids()
    n = len(ids)
    if not g.edges:
        return PropertyVector("closeness", {v: 0.0 for v in ids})
    index = {v: i for i, v in enumerate(ids)}
    e = np.array([(index[a], index[b]) for a, b in sorted(g.edges)], dtype=np.int64)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    adj.sort_indices()
    vals = _harmonic_bfs(adj.indptr.astype(np.int64), adj.indices.astype(np.int64), n)
    return PropertyVector("closeness", {v: float(vals[i]) for i, v in enumerate(ids)})


def node_degrees(g: SpatialGraph) -> PropertyVector:
    deg = Counter({v: 0 for v in g.nodes})
    for a, b in g.edges:
        deg[a] += 1
        deg[b] += 1
    return PropertyVector("degree", dict(deg))


def s_degrees(h: Hypergraph, s: int) -> PropertyVector:
    """Count of incident hyperedges with size >= s, per node."""
    deg = {v: 0 for v in h.nodes}
    for e in h.hyperedges:
        if len(e) >= s:
            for v in e:
                deg[v] += 1
    return PropertyVector("s_degree", deg, s)


def s_closeness(h: Hypergraph, s: int) -> PropertyVector:
    vec = harmonic_closeness(s_line_graph(h, s))
    return PropertyVector("s_closeness", vec.values, s)


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else 0.0


def graph_properties(g: SpatialGraph) -> GraphProperties:
    if g.n_nodes == 0:
        return GraphProperties(0, 0.0, 0.0)
    return GraphProperties(
        g.n_edges,
        2.0 * g.n_edges / g.n_nodes,
        _mean(harmonic_closeness(g).values.values()),
    )


def covered_area(h: Hypergraph) -> float:
    return float(sum(triangle_area(*(h.nodes[v] for v in t)) for t in h.triangles()))


def hypergraph_properties(h: Hypergraph, s: int) -> HypergraphProperties:
    _check_s(s)
    tris = sum(1 for e in h.hyperedges if len(e) == 3)
    return HypergraphProperties(
        len(h.hyperedges),
        tris,
        covered_area(h),
        _mean(s_degrees(h, s).values.values()),
        _mean(s_closeness(h, s).values.values()),
    )
