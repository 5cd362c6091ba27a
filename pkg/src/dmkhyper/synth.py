"""Synthetic source/sink problems: one source disk at the origin, sink disks
sampled without replacement from a regular grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dmk import ForcingField, TransportProblem
from .mesh import Mesh, triangulate_unit_square

DEFAULT_N_SINKS = 15
FULL_BETAS = (1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9)


@dataclass(frozen=True)
class ProblemSpec:
    source_center: tuple
    sink_centers: tuple
    radius: float
    seed: int
    n_sinks: int = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "source_center", tuple(float(c) for c in self.source_center))
        object.__setattr__(self, "sink_centers", tuple(tuple(float(c) for c in p) for p in self.sink_centers))
        if self.n_sinks is None:
            object.__setattr__(self, "n_sinks", len(self.sink_centers))
        if self.n_sinks != len(self.sink_centers):
            raise ValueError("n_sinks does not match the number of sink centers")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        for p in (self.source_center, *self.sink_centers):
            if not (0.0 <= p[0] <= 1.0 and 0.0 <= p[1] <= 1.0):
                raise ValueError(f"center {p} lies outside the unit square")
        if len(set(self.sink_centers)) != len(self.sink_centers):
            raise ValueError("sink centers must be pairwise distinct")

    def to_dict(self) -> dict:
        return {
            "source_center": list(self.source_center),
            "sink_centers": [list(p) for p in self.sink_centers],
            "radius": self.radius,
            "seed": self.seed,
            "n_sinks": self.n_sinks,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        return cls(
            source_center=data["source_center"],
            sink_centers=data["sink_centers"],
            radius=data["radius"],
            seed=data["seed"],
            n_sinks=data.get("n_sinks"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(text))


def default_radius(n_div: int) -> float:
    return 1.5 / n_div


def derive_seed(master_seed: int, index: int) -> int:
    """Deterministic 32-bit seed for job ``index`` of a campaign."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def disk_indicator(mesh: Mesh, center, r) -> np.ndarray:
    d = np.hypot(mesh.vertices[:, 0] - center[0], mesh.vertices[:, 1] - center[1])
    # small slack so grid-aligned distances equal to r are counted inside
    return d <= r * (1 + 1e-12)


def forcing_from_spec(mesh: Mesh, spec: ProblemSpec) -> ForcingField:
    """Build per-vertex ``f = f+ - f-`` with each side normalized to unit mass."""
    w = mesh.vertex_weights()
    plus = disk_indicator(mesh, spec.source_center, spec.radius).astype(float)
    if not plus.any():
        raise ValueError(f"source disk at {spec.source_center} captures no mesh vertex; radius too small")
    minus = np.zeros(mesh.n_vertices)
    for c in spec.sink_centers:
        ind = disk_indicator(mesh, c, spec.radius)
        if not ind.any():
            raise ValueError(f"sink disk at {c} captures no mesh vertex; radius too small")
        minus += ind
    plus /= np.dot(plus, w)
    minus /= np.dot(minus, w)
    src = frozenset(np.flatnonzero(plus).tolist())
    snk = frozenset(np.flatnonzero(minus).tolist())
    if src & snk:
        raise ValueError("source and sink disks share mesh vertices")
    return ForcingField(plus - minus, src, snk)


def sampling_grid(n_div: int, exclude_center=(0.0, 0.0), exclude_radius=0.0) -> np.ndarray:
    xs = np.arange(n_div + 1) / n_div
    gx, gy = np.meshgrid(xs, xs)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d = np.hypot(pts[:, 0] - exclude_center[0], pts[:, 1] - exclude_center[1])
    return pts[d > exclude_radius]


def generate_spec(seed, n_div, n_sinks=DEFAULT_N_SINKS, r=None, sample_grid_divisions=None) -> ProblemSpec:
    r = default_radius(n_div) if r is None else float(r)
    g = n_div if sample_grid_divisions is None else int(sample_grid_divisions)
    candidates = sampling_grid(g, (0.0, 0.0), 2 * r)
    if n_sinks > len(candidates):
        raise ValueError(f"requested {n_sinks} sinks but the sampling grid has {len(candidates)} admissible nodes")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(candidates), size=n_sinks, replace=False)
    return ProblemSpec((0.0, 0.0), [tuple(candidates[i]) for i in pick], r, int(seed), n_sinks)


def generate_problem(seed, sample_grid_divisions=None, n_sinks=DEFAULT_N_SINKS, r=None, mesh=None, n_div=32):
    """Sample a problem and discretize its forcing on ``mesh``.

    When ``mesh`` is omitted a structured ``n_div`` mesh is built.
    """
    if mesh is None:
        mesh = triangulate_unit_square(n_div)
    else:
        n_div = int(round(1.0 / _grid_spacing(mesh)))
    spec = generate_spec(seed, n_div, n_sinks, r, sample_grid_divisions)
    return problem_from_spec(spec, mesh)


def problem_from_spec(spec: ProblemSpec, mesh: Mesh) -> TransportProblem:
    return TransportProblem(mesh, forcing_from_spec(mesh, spec), spec)


def _grid_spacing(mesh: Mesh) -> float:
    e = mesh.edges
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    return float(lengths.min())


@dataclass(frozen=True)
class Job:
    job_id: str
    problem_index: int
    seed: int
    beta: float

    def to_dict(self) -> dict:
        return {"job_id": self.job_id, "problem_index": self.problem_index, "seed": self.seed, "beta": self.beta}


def generate_ensemble(n_problems, betas, master_seed=0, n_div=32, n_sinks=DEFAULT_N_SINKS, r=None,
                      sample_grid_divisions=None):
    """Cartesian product of seeded problems and traffic rates.

    Returns ``(ProblemSpec, Job)`` pairs ordered by problem, then beta.
    """
    if n_problems < 1:
        raise ValueError("n_problems must be at least 1")
    betas = list(betas)
    if not betas:
        raise ValueError("betas must be non-empty")
    jobs = []
    for i in range(n_problems):
        seed = derive_seed(master_seed, i)
        spec = generate_spec(seed, n_div, n_sinks, r, sample_grid_divisions)
        for beta in betas:
            jobs.append((spec, Job(f"p{i:03d}_b{beta:.2f}", i, seed, float(beta))))
    return jobs
