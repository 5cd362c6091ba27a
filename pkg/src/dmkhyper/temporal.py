"""Property traces over a DMK run and the cost/property convergence times."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .extract import active_triangles, graph_from_mask, hypergraph_from_graph
from .hyper import covered_area, graph_properties, s_closeness, s_degrees

logger = logging.getLogger(__name__)

DEFAULT_P = 1.05
COST_PROPERTIES = ("L", "E", "M")


@dataclass
class PropertyTrace:
    name: str
    values: np.ndarray
    times: np.ndarray = None
    beta: float = None
    s: int = None

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError(f"trace {self.name!r} must be a non-empty 1-D series")
        if self.times is None:
            self.times = np.arange(len(self.values))
        self.times = np.asarray(self.times, dtype=np.int64)
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time indices must be strictly increasing")

    @property
    def key(self):
        return self.name if self.s is None else f"{self.name}_{self.s}"

    def __len__(self):
        return len(self.values)


@dataclass
class ConvergenceReport:
    t_cost: int
    t_property: dict
    p: float = DEFAULT_P
    n_steps: int = None
    converged: bool = None

    def to_dict(self) -> dict:
        return {
            "t_cost": int(self.t_cost),
            "t_property": {k: int(v) for k, v in sorted(self.t_property.items())},
            "p": self.p,
            "n_steps": self.n_steps,
            "converged": self.converged,
        }


@dataclass
class RunAnalysis:
    traces: dict
    report: ConvergenceReport
    hypergraphs: list = field(default_factory=list)

    def final_values(self) -> dict:
        return {k: float(tr.values[-1]) for k, tr in self.traces.items()}


def convergence_time(trace, p=DEFAULT_P) -> int:
    """First time index whose value is within a factor ``p`` of the final value."""
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    values = np.asarray(getattr(trace, "values", trace), float)
    times = getattr(trace, "times", None)
    if len(values) == 0:
        raise ValueError("empty trace")
    i = int(np.argmax(values <= p * values[-1]))
    return int(times[i]) if times is not None else i


def step_metrics(h, g, s_values=(1, 2)) -> dict:
    """All scalar metrics of one snapshot, keyed by trace name."""
    out = {}
    out["E_H"] = float(len(h.hyperedges))
    out["T"] = float(sum(1 for e in h.hyperedges if len(e) == 3))
    out["S"] = covered_area(h)
    for s in s_values:
        vals = list(s_degrees(h, s).values.values())
        out[f"d_{s}"] = float(np.mean(vals)) if vals else 0.0
    for s in s_values:
        vals = list(s_closeness(h, s).values.values())
        out[f"c_{s}"] = float(np.mean(vals)) if vals else 0.0
    out["E_G"] = float(g.n_edges)
    out["d_G"] = 2.0 * g.n_edges / g.n_nodes if g.n_nodes else 0.0
    # L_1 is the skeleton of h, which is g itself
    out["c_G"] = out["c_1"] if "c_1" in out else graph_properties(g).avg_closeness
    return out


def _trace_meta(key):
    name, _, s = key.rpartition("_")
    if name in ("d", "c") and s.isdigit():
        return name, int(s)
    return key, None


def analyze_run(run, s_values=(1, 2), threshold_ratio=0.01, p=DEFAULT_P, keep_hypergraphs=False) -> RunAnalysis:
    """Extract a hypergraph at every step of ``run`` and assemble metric traces.

    Consecutive steps with the same active-triangle set reuse the metrics
    of the first occurrence.
    """
    mesh = run.problem.mesh
    beta = run.config.beta
    rows = {k: [] for k in COST_PROPERTIES}
    cache = {}
    hypergraphs = []
    for step in run.steps:
        rows["L"].append(step.cost.total)
        rows["E"].append(step.cost.energy)
        rows["M"].append(step.cost.structure)
        try:
            mask = active_triangles(step.conductivity.mu, threshold_ratio)
        except ValueError as exc:
            raise ValueError(f"extraction failed at t={step.t}: {exc}") from exc
        key = mask.tobytes()
        if key not in cache:
            g = graph_from_mask(mesh, mask)
            h = hypergraph_from_graph(g)
            cache = {key: (h, step_metrics(h, g, s_values))}
        h, metrics = cache[key]
        if keep_hypergraphs:
            hypergraphs.append(h)
        for name, value in metrics.items():
            rows.setdefault(name, []).append(value)

    traces = {}
    for key, values in rows.items():
        name, s = _trace_meta(key)
        traces[key] = PropertyTrace(name, values, beta=beta, s=s)
    t_cost = convergence_time(traces["L"], p)
    t_prop = {k: convergence_time(tr, p) for k, tr in traces.items() if k not in COST_PROPERTIES}
    report = ConvergenceReport(t_cost, t_prop, p, n_steps=len(run.steps) - 1, converged=run.converged)
    return RunAnalysis(traces, report, hypergraphs)


@dataclass
class AggregateTrace:
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray


def aggregate(traces) -> AggregateTrace:
    """Per-time mean and population std; shorter traces hold their last value."""
    series = [np.asarray(getattr(t, "values", t), float) for t in traces]
    if not series:
        raise ValueError("aggregate needs at least one trace")
    n = max(len(s) for s in series)
    padded = np.empty((len(series), n))
    count = np.zeros(n, dtype=np.int64)
    for i, s in enumerate(series):
        if len(s) == 0:
            raise ValueError("cannot aggregate an empty trace")
        padded[i, : len(s)] = s
        padded[i, len(s):] = s[-1]
        count[: len(s)] += 1
    # shift by the first run so identical columns give exactly zero spread
    dev = padded - padded[0]
    shift = dev.mean(axis=0)
    std = np.sqrt(np.mean((dev - shift) ** 2, axis=0))
    return AggregateTrace(padded[0] + shift, std, count)
