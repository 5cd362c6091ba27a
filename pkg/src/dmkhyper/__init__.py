"""Temporal hypergraphs from Dynamical Monge-Kantorovich transport solutions."""

__version__ = "0.1.0"

from .dmk import SolverConfig, TransportProblem, run_dmk  # noqa: E402
from .estimators import DMKSolver, HypernetworkFeatures, ImageHypernetwork  # noqa: E402
from .extract import Hypergraph, SpatialGraph, graph_from_field, hypergraph_from_graph, skeleton  # noqa: E402
from .mesh import Mesh, triangulate_unit_square  # noqa: E402
from .synth import ProblemSpec, generate_ensemble, generate_problem  # noqa: E402
from .temporal import analyze_run, convergence_time  # noqa: E402

__all__ = [
    "DMKSolver",
    "HypernetworkFeatures",
    "Hypergraph",
    "ImageHypernetwork",
    "Mesh",
    "ProblemSpec",
    "SolverConfig",
    "SpatialGraph",
    "TransportProblem",
    "analyze_run",
    "convergence_time",
    "generate_ensemble",
    "generate_problem",
    "graph_from_field",
    "hypergraph_from_graph",
    "run_dmk",
    "skeleton",
    "triangulate_unit_square",
]
