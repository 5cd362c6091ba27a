"""Job execution and on-disk artifacts shared by the CLI subcommands.

Every job directory holds::

    manifest.json      config snapshot, problem, hashes of every artifact
    problem.json       source/sink layout
    cost.csv           t, L, E, M
    traces.csv         t, beta, run_id, property, s, value
    convergence.json   t_L and per-property t_P
    snapshots/mu.f64   little-endian float64, shape (n_steps, n_triangles)
    hypergraphs/       canonical JSON per exported step
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError
from .dmk import ConductivityField, DMKRun, DMKStep, SolverConfig, lyapunov_cost, run_dmk
from .dmk import assemble_and_solve_potential
from .extract import active_triangles, graph_from_mask, hypergraph_from_graph
from .image import ImageSequenceManifest, analyze_image_sequence
from .mesh import triangulate_unit_square
from .synth import ProblemSpec, generate_ensemble, generate_spec, problem_from_spec
from .temporal import DEFAULT_P, aggregate, analyze_run

logger = logging.getLogger(__name__)

MANIFEST_KIND = "dmkhyper-run"
TRACE_HEADER = ["t", "beta", "run_id", "property", "s", "value"]
AGGREGATE_HEADER = ["t", "beta", "property", "s", "mean", "std", "n"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def solver_config(cfg: dict, beta=None) -> SolverConfig:
    params = dict(cfg["solver"])
    if beta is not None:
        params["beta"] = float(beta)
    return SolverConfig(**params)


def spec_from_config(cfg: dict) -> ProblemSpec:
    p = cfg["problem"]
    return generate_spec(p["seed"], cfg["mesh"]["n_div"], p["n_sinks"], p["radius"], p["sample_grid_divisions"])


def trace_rows(traces: dict, beta, run_id):
    """Long-format rows ordered by property key, then time."""
    for key in sorted(traces):
        tr = traces[key]
        for t, v in zip(tr.times, tr.values):
            yield int(t), beta, run_id, tr.name, tr.s, float(v)


def write_hypergraphs(directory: Path, run: DMKRun, cfg: dict, which: str) -> list:
    if which == "none":
        return []
    directory.mkdir(parents=True, exist_ok=True)
    mesh = run.problem.mesh
    ratio = cfg["extraction"]["threshold_ratio"]
    steps = run.steps if which == "all" else run.steps[-1:]
    written = []
    for step in steps:
        g = graph_from_mask(mesh, active_triangles(step.conductivity.mu, ratio))
        path = directory / f"t{step.t:04d}.json"
        path.write_text(hypergraph_from_graph(g).to_json() + "\n")
        written.append(path)
    return written


def _finalize_manifest(out: Path, manifest: dict, artifacts) -> dict:
    manifest["artifacts"] = {str(p.relative_to(out)): sha256(p) for p in sorted(artifacts)}
    _write_json(out / "manifest.json", manifest)
    return manifest


def write_run_artifacts(out: Path, cfg: dict, run: DMKRun, run_id: str, analysis=None) -> dict:
    """Analyze ``run`` (unless ``analysis`` is given) and write all job artifacts to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    an = cfg["analysis"]
    if analysis is None:
        analysis = analyze_run(run, tuple(an["s_values"]), cfg["extraction"]["threshold_ratio"], an["p"])
    beta = run.config.beta
    artifacts = []

    spec = run.problem.spec
    _write_json(out / "problem.json", spec.to_dict())
    artifacts.append(out / "problem.json")

    costs = run.cost_trace()
    _write_csv(out / "cost.csv", ["t", "L", "E", "M"],
               ([s.t, float(c[0]), float(c[1]), float(c[2])] for s, c in zip(run.steps, costs)))
    artifacts.append(out / "cost.csv")

    _write_csv(out / "traces.csv", TRACE_HEADER, trace_rows(analysis.traces, beta, run_id))
    artifacts.append(out / "traces.csv")

    _write_json(out / "convergence.json", analysis.report.to_dict())
    artifacts.append(out / "convergence.json")

    if cfg["output"]["snapshots"]:
        (out / "snapshots").mkdir(exist_ok=True)
        mu = np.array([s.conductivity.mu for s in run.steps], dtype="<f8")
        (out / "snapshots" / "mu.f64").write_bytes(mu.tobytes())
        artifacts.append(out / "snapshots" / "mu.f64")

    artifacts += write_hypergraphs(out / "hypergraphs", run, cfg, cfg["output"]["hypergraphs"])

    manifest = {
        "kind": MANIFEST_KIND,
        "version": __version__,
        "run_id": run_id,
        "config": cfg,
        "beta": beta,
        "problem": spec.to_dict(),
        "problem_hash": hashlib.sha256(spec.to_json().encode()).hexdigest(),
        "mesh": {"n_vertices": run.problem.mesh.n_vertices, "n_triangles": run.problem.mesh.n_triangles},
        "n_states": len(run.steps),
        "converged": run.converged,
        "snapshot_layout": {"dtype": "<f8", "shape": [len(run.steps), run.problem.mesh.n_triangles]},
        "cost_rows": [[s.t, float(c[0]), float(c[1]), float(c[2])] for s, c in zip(run.steps, costs)],
    }
    _finalize_manifest(out, manifest, artifacts)
    return {"analysis": analysis, "manifest": manifest}


def solve_job(cfg: dict, out: Path, spec: ProblemSpec = None, beta=None, run_id="run") -> dict:
    mesh = triangulate_unit_square(cfg["mesh"]["n_div"])
    spec = spec or spec_from_config(cfg)
    problem = problem_from_spec(spec, mesh)
    config = solver_config(cfg, beta)
    run = run_dmk(problem, config)
    # snapshot exactly what was run so the manifest alone reproduces the job
    cfg = json.loads(json.dumps(cfg))
    cfg["solver"]["beta"] = config.beta
    cfg["problem"]["seed"] = spec.seed
    return write_run_artifacts(Path(out), cfg, run, run_id)


def load_run(job_dir: Path) -> tuple:
    """Rebuild a :class:`DMKRun` from stored snapshots (potentials and costs recomputed)."""
    job_dir = Path(job_dir)
    manifest = json.loads((job_dir / "manifest.json").read_text())
    if manifest.get("kind") != MANIFEST_KIND:
        raise ConfigError("not a run manifest", source=str(job_dir / "manifest.json"))
    cfg = manifest["config"]
    shape = manifest["snapshot_layout"]["shape"]
    raw = (job_dir / "snapshots" / "mu.f64").read_bytes()
    mu = np.frombuffer(raw, dtype="<f8").reshape(shape)
    mesh = triangulate_unit_square(cfg["mesh"]["n_div"])
    spec = ProblemSpec.from_dict(manifest["problem"])
    problem = problem_from_spec(spec, mesh)
    config = solver_config(cfg, manifest["beta"])
    run = DMKRun(problem, config, converged=manifest["converged"])
    for t, m in enumerate(mu):
        pot = assemble_and_solve_potential(mesh, m, problem.forcing, config.linear_tol, config.linear_solver)
        run.steps.append(DMKStep(ConductivityField(m.copy(), t), pot, lyapunov_cost(mesh, m, pot.u, config.beta)))
    return run, manifest


def props_job(job_dir: Path, overrides: dict = None) -> dict:
    """Recompute traces and convergence times of a stored job, optionally with new analysis settings."""
    run, manifest = load_run(job_dir)
    cfg = manifest["config"]
    if overrides:
        from .config import merge, validate
        cfg = validate(merge(cfg, overrides))
    return write_run_artifacts(Path(job_dir), cfg, run, manifest["run_id"])


def _batch_worker(args):
    cfg, job_dir, spec_dict, beta, run_id = args
    try:
        res = solve_job(cfg, Path(job_dir), ProblemSpec.from_dict(spec_dict), beta, run_id)
        an = res["analysis"]
        return {"run_id": run_id, "ok": True, "report": an.report.to_dict(),
                "traces": {k: tr.values.tolist() for k, tr in an.traces.items()},
                "s": {k: tr.s for k, tr in an.traces.items()}, "names": {k: tr.name for k, tr in an.traces.items()}}
    except Exception as exc:  # recorded per job; the batch carries on
        logger.exception("job %s failed", run_id)
        return {"run_id": run_id, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def run_batch(cfg: dict, out: Path, parallelism: int = 1) -> dict:
    """Run every (problem, beta) job of the ensemble and write aggregates.

    Aggregates are computed after all jobs finish, in job order, so they do
    not depend on ``parallelism``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ens = cfg["ensemble"]
    p = cfg["problem"]
    jobs = generate_ensemble(ens["n_problems"], ens["betas"], ens["master_seed"], cfg["mesh"]["n_div"],
                             p["n_sinks"], p["radius"], p["sample_grid_divisions"])
    tasks = [(cfg, str(out / "jobs" / job.job_id), spec.to_dict(), job.beta, job.job_id) for spec, job in jobs]
    if parallelism <= 1:
        results = [_batch_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_batch_worker, tasks))

    by_id = {r["run_id"]: r for r in results}
    artifacts = []

    summary_rows = []
    prop_keys = None
    for spec, job in jobs:
        r = by_id[job.job_id]
        if not r["ok"]:
            continue
        t_prop = r["report"]["t_property"]
        prop_keys = prop_keys or sorted(t_prop)
        summary_rows.append([job.job_id, job.problem_index, job.seed, job.beta, r["report"]["t_cost"],
                             r["report"]["n_steps"], r["report"]["converged"]] + [t_prop[k] for k in prop_keys])
    _write_csv(out / "summary.csv",
               ["run_id", "problem_index", "seed", "beta", "t_L", "n_steps", "converged"]
               + [f"t_P_{k}" for k in (prop_keys or [])], summary_rows)
    artifacts.append(out / "summary.csv")

    agg_rows = []
    for beta in ens["betas"]:
        ok = [by_id[j.job_id] for _, j in jobs if j.beta == float(beta) and by_id[j.job_id]["ok"]]
        if not ok:
            continue
        for key in sorted(ok[0]["traces"]):
            agg = aggregate([r["traces"][key] for r in ok])
            name, s = ok[0]["names"][key], ok[0]["s"][key]
            for t in range(len(agg.mean)):
                agg_rows.append([t, float(beta), name, s, float(agg.mean[t]), float(agg.std[t]), int(agg.count[t])])
    _write_csv(out / "aggregate.csv", AGGREGATE_HEADER, agg_rows)
    artifacts.append(out / "aggregate.csv")

    manifest = {
        "kind": "dmkhyper-batch",
        "version": __version__,
        "config": cfg,
        "std": "population",
        "alignment": "hold-last-value",
        "jobs": [dict(job.to_dict(), problem=spec.to_dict(), status="ok" if by_id[job.job_id]["ok"] else "failed",
                      error=by_id[job.job_id].get("error"), directory=f"jobs/{job.job_id}")
                 for spec, job in jobs],
    }
    _finalize_manifest(out, manifest, artifacts)
    n_failed = sum(1 for r in results if not r["ok"])
    return {"manifest": manifest, "n_failed": n_failed, "results": by_id}


def image_job(cfg: dict, manifest_path: Path, out: Path) -> dict:
    im = cfg["image"]
    seq = ImageSequenceManifest.from_json(manifest_path)
    result = analyze_image_sequence(seq, im["intensity_threshold"], im["downsample"],
                                    tuple(cfg["analysis"]["s_values"]), im["permissive"], im["window"])
    out = Path(out)
    (out / "hypergraphs").mkdir(parents=True, exist_ok=True)
    artifacts = []
    for idx, h in zip(result.frame_indices, result.hypergraphs):
        path = out / "hypergraphs" / f"frame{idx:04d}.json"
        path.write_text(h.to_json() + "\n")
        artifacts.append(path)
    _write_csv(out / "traces.csv", TRACE_HEADER, trace_rows(result.traces, None, "image"))
    artifacts.append(out / "traces.csv")
    report = {
        "frames": result.frame_indices,
        "empty_frames": result.empty_frames,
        "errors": {str(k): v for k, v in result.errors.items()},
        "t_property": result.t_property,
        "consolidation_window": list(result.consolidation) if result.consolidation else None,
        "p": DEFAULT_P,
    }
    _write_json(out / "consolidation.json", report)
    artifacts.append(out / "consolidation.json")
    manifest = {
        "kind": "dmkhyper-image",
        "version": __version__,
        "config": cfg,
        "sequence": seq.to_dict(),
    }
    _finalize_manifest(out, manifest, artifacts)
    return {"result": result, "report": report}
