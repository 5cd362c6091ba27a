"""Structured triangulation of the unit square."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def triangle_area(p1, p2, p3) -> float:
    """Absolute shoelace area of the triangle ``p1 p2 p3``."""
    (x1, y1), (x2, y2), (x3, y3) = p1, p2, p3
    return 0.5 * abs((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1))


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with derived edge and incidence tables.

    ``edges`` holds sorted vertex pairs in lexicographic order and
    ``edge_triangles`` maps each edge row to its one or two incident
    triangles (``-1`` pads boundary edges).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    triangle_areas: np.ndarray = field(init=False)
    edges: np.ndarray = field(init=False)
    triangle_edges: np.ndarray = field(init=False)
    edge_triangles: np.ndarray = field(init=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (n, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (m, 3)")
        areas = signed_areas(vertices, triangles)
        if np.any(areas <= 0):
            bad = int(np.flatnonzero(areas <= 0)[0])
            raise ValueError(f"triangle {bad} is degenerate or clockwise")

        local = triangles[:, [[0, 1], [1, 2], [2, 0]]]  # (m, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)

        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        counts = np.zeros(len(edges), dtype=np.int64)
        for t, row in enumerate(tri_edges):
            for e in row:
                if counts[e] >= 2:
                    raise ValueError(f"edge {tuple(edges[e])} shared by more than 2 triangles")
                edge_tris[e, counts[e]] = t
                counts[e] += 1

        for name, value in (
            ("vertices", vertices),
            ("triangles", triangles),
            ("triangle_areas", areas),
            ("edges", edges),
            ("triangle_edges", tri_edges),
            ("edge_triangles", edge_tris),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.edge_triangles[:, 1] < 0]

    def vertex_weights(self) -> np.ndarray:
        """Lumped vertex areas: each triangle gives a third of its area to each corner."""
        w = np.zeros(self.n_vertices)
        np.add.at(w, self.triangles.ravel(), np.repeat(self.triangle_areas / 3.0, 3))
        return w

    def gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions on every triangle, shape (m, 3, 2)."""
        p = self.vertices[self.triangles]
        # grad phi_i = rot90(opposite edge) / (2 area)
        opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        rot = np.stack([-opp[..., 1], opp[..., 0]], axis=-1)
        return rot / (2.0 * self.triangle_areas[:, None, None])

    def to_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Mesh":
        return cls(np.asarray(data["vertices"], float), np.asarray(data["triangles"], np.int64))

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        return cls.from_dict(json.loads(text))


def triangulate_unit_square(n_div: int) -> Mesh:
    """Regular ``n_div x n_div`` grid on [0,1]^2, each cell cut along its
    bottom-left to top-right diagonal.

    Vertex ``(i, j)`` (column ``i``, row ``j``) has index ``j * (n_div + 1) + i``.
    """
    if int(n_div) != n_div or n_div < 1:
        raise ValueError(f"n_div must be a positive integer, got {n_div!r}")
    n = int(n_div)
    xs = np.arange(n + 1) / n
    gx, gy = np.meshgrid(xs, xs)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    bl = j * (n + 1) + i
    br = bl + 1
    tl = bl + (n + 1)
    tr = tl + 1
    lower = np.column_stack([bl, br, tr])
    upper = np.column_stack([bl, tr, tl])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles)
