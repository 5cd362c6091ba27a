"""Graphs from conductivity fields and their triangle lifts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .mesh import Mesh


def _pair(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected graph with 2-D node positions.

    ``nodes`` maps node id to ``(x, y)``; ``edges`` holds sorted id pairs.
    """

    nodes: dict
    edges: frozenset

    def __post_init__(self):
        edges = frozenset(_pair(*e) for e in self.edges)
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a}, {b}) references a missing node")
        object.__setattr__(self, "edges", edges)

    def __eq__(self, other):
        if not isinstance(other, SpatialGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    __hash__ = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_ids(self) -> list:
        return sorted(self.nodes)

    def neighbors(self) -> dict:
        adj = {v: set() for v in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": int(v), "x": float(self.nodes[v][0]), "y": float(self.nodes[v][1])} for v in self.node_ids()],
            "edges": [list(map(int, e)) for e in sorted(self.edges)],
        }


@dataclass(frozen=True)
class Hypergraph:
    """Hyperedges of size 2 (edges) and 3 (triangles) over positioned nodes."""

    nodes: dict
    hyperedges: frozenset

    def __post_init__(self):
        normalized = set()
        for e in self.hyperedges:
            e = tuple(sorted(e))
            if len(set(e)) != len(e):
                raise ValueError(f"hyperedge {e} repeats a node")
            if len(e) not in (2, 3):
                raise ValueError(f"hyperedge {e} has size {len(e)}; only sizes 2 and 3 are supported")
            for v in e:
                if v not in self.nodes:
                    raise ValueError(f"hyperedge {e} references a missing node")
            normalized.add(e)
        object.__setattr__(self, "hyperedges", frozenset(normalized))

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return self.nodes == other.nodes and self.hyperedges == other.hyperedges

    __hash__ = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_ids(self) -> list:
        return sorted(self.nodes)

    def triangles(self) -> list:
        return sorted(e for e in self.hyperedges if len(e) == 3)

    def sorted_hyperedges(self) -> list:
        return sorted(self.hyperedges)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": int(v), "x": float(self.nodes[v][0]), "y": float(self.nodes[v][1])} for v in self.node_ids()],
            "hyperedges": [list(map(int, e)) for e in self.sorted_hyperedges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "Hypergraph":
        nodes = {int(n["id"]): (float(n["x"]), float(n["y"])) for n in data["nodes"]}
        return cls(nodes, frozenset(tuple(e) for e in data["hyperedges"]))

    @classmethod
    def from_json(cls, text: str) -> "Hypergraph":
        return cls.from_dict(json.loads(text))


def active_triangles(mu, threshold_ratio) -> np.ndarray:
    mu = np.asarray(getattr(mu, "mu", mu), float)
    top = mu.max()
    if not top > 0:
        raise ValueError("conductivity is identically zero; nothing to extract")
    if not 0 < threshold_ratio < 1:
        raise ValueError(f"threshold_ratio must lie in (0, 1), got {threshold_ratio}")
    return mu >= threshold_ratio * top


def graph_from_mask(mesh: Mesh, mask) -> SpatialGraph:
    """Graph made of the vertices and edges of the triangles selected by ``mask``."""
    mask = np.asarray(mask, bool)
    verts = np.unique(mesh.triangles[mask])
    edge_ids = np.unique(mesh.triangle_edges[mask])
    nodes = {int(v): (float(mesh.vertices[v, 0]), float(mesh.vertices[v, 1])) for v in verts}
    edges = frozenset((int(a), int(b)) for a, b in mesh.edges[edge_ids])
    return SpatialGraph(nodes, edges)


def graph_from_field(mesh: Mesh, mu, threshold_ratio=0.01) -> SpatialGraph:
    """Keep triangles with ``mu >= threshold_ratio * max(mu)``; return their vertices and edges."""
    return graph_from_mask(mesh, active_triangles(mu, threshold_ratio))


def enumerate_triangles(g: SpatialGraph) -> list:
    """All 3-cliques of ``g`` as sorted id triples."""
    adj = g.neighbors()
    out = []
    for a, b in sorted(g.edges):
        for c in adj[a] & adj[b]:
            if c > b:
                out.append((a, b, c))
    out.sort()
    return out


def hypergraph_from_graph(g: SpatialGraph) -> Hypergraph:
    """Lift ``g`` by adjoining every 3-clique as a size-3 hyperedge."""
    return Hypergraph(dict(g.nodes), frozenset(g.edges) | frozenset(enumerate_triangles(g)))


def skeleton(h: Hypergraph) -> SpatialGraph:
    """Clique expansion: every node pair inside some hyperedge becomes an edge."""
    edges = set()
    for e in h.hyperedges:
        edges.update(combinations(e, 2))
    return SpatialGraph(dict(h.nodes), frozenset(edges))
