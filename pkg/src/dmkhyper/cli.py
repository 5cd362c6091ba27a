"""Command-line entry point: ``dmkhyper {gen,solve,batch,props,image}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .dmk import SolverError
from .image import FrameError, PGMError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

logger = logging.getLogger("dmkhyper")


def _overrides(args) -> dict:
    o = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    put("mesh", "n_div", getattr(args, "n_div", None))
    put("problem", "seed", getattr(args, "seed", None))
    put("problem", "n_sinks", getattr(args, "n_sinks", None))
    put("solver", "beta", getattr(args, "beta", None))
    put("solver", "dt", getattr(args, "dt", None))
    put("solver", "max_iter", getattr(args, "max_iter", None))
    put("solver", "tau", getattr(args, "tau", None))
    put("extraction", "threshold_ratio", getattr(args, "threshold_ratio", None))
    if getattr(args, "s_values", None):
        put("analysis", "s_values", [int(s) for s in args.s_values.split(",")])
    put("analysis", "p", getattr(args, "p", None))
    put("output", "hypergraphs", getattr(args, "hypergraphs", None))
    put("ensemble", "n_problems", getattr(args, "n_problems", None))
    if getattr(args, "betas", None):
        put("ensemble", "betas", [float(b) for b in args.betas.split(",")])
    put("ensemble", "master_seed", getattr(args, "master_seed", None))
    put("image", "intensity_threshold", getattr(args, "intensity_threshold", None))
    put("image", "downsample", getattr(args, "downsample", None))
    if getattr(args, "permissive", False):
        put("image", "permissive", True)
    return o


def _common(p, *, out=True):
    p.add_argument("--config", type=Path, help="JSON config file (or a run manifest)")
    if out:
        p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, help="problem seed")
    p.add_argument("--n-div", type=int, help="mesh divisions per side")
    p.add_argument("--n-sinks", type=int)


def _solver_flags(p):
    p.add_argument("--beta", type=float, help="traffic rate in (1, 2)")
    p.add_argument("--dt", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--threshold-ratio", type=float, help="active triangles have mu >= ratio * max(mu)")
    p.add_argument("--s-values", help="comma-separated s values, e.g. 1,2")
    p.add_argument("--p", type=float, help="convergence band factor (default 1.05)")
    p.add_argument("--hypergraphs", choices=["none", "final", "all"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmkhyper", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit a problem spec (or an ensemble job list) as JSON")
    _common(p, out=False)
    p.add_argument("--out", type=Path, help="write to this file instead of stdout")
    p.add_argument("--ensemble", action="store_true", help="emit the full ensemble job list")
    p.add_argument("--n-problems", type=int)
    p.add_argument("--betas")
    p.add_argument("--master-seed", type=int)

    p = sub.add_parser("solve", help="run one problem and analyze its hypergraph sequence")
    _common(p)
    _solver_flags(p)

    p = sub.add_parser("batch", help="run an ensemble of problems x betas")
    _common(p)
    _solver_flags(p)
    p.add_argument("--n-problems", type=int)
    p.add_argument("--betas", help="comma-separated betas")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--parallelism", type=int, default=None,
                   help="worker processes (default: number of CPUs)")

    p = sub.add_parser("props", help="recompute analytics on a stored run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--threshold-ratio", type=float)
    p.add_argument("--s-values")
    p.add_argument("--p", type=float)
    p.add_argument("--hypergraphs", choices=["none", "final", "all"])

    p = sub.add_parser("image", help="analyze a PGM image sequence")
    p.add_argument("manifest", type=Path, help="JSON manifest listing PGM frames")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--intensity-threshold", type=float)
    p.add_argument("--downsample", type=int)
    p.add_argument("--s-values")
    p.add_argument("--permissive", action="store_true", help="skip undecodable frames instead of failing")
    return parser


def _cmd_gen(args):
    from .synth import generate_ensemble
    from .runner import spec_from_config

    cfg = load_config(args.config, _overrides(args))
    if args.ensemble:
        ens, p = cfg["ensemble"], cfg["problem"]
        jobs = generate_ensemble(ens["n_problems"], ens["betas"], ens["master_seed"], cfg["mesh"]["n_div"],
                                 p["n_sinks"], p["radius"], p["sample_grid_divisions"])
        data = {"master_seed": ens["master_seed"],
                "jobs": [dict(job.to_dict(), problem=spec.to_dict()) for spec, job in jobs]}
    else:
        data = spec_from_config(cfg).to_dict()
    text = json.dumps(data, sort_keys=True, indent=1) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_solve(args):
    from .runner import MANIFEST_KIND, solve_job
    from .synth import ProblemSpec

    cfg = load_config(args.config, _overrides(args))
    spec, run_id = None, "run"
    if args.config is not None:
        # a run manifest also pins the problem and the run id
        data = json.loads(Path(args.config).read_text())
        if data.get("kind") == MANIFEST_KIND:
            run_id = data.get("run_id", run_id)
            if not {"seed", "n_sinks"} & set(_overrides(args).get("problem", {})) and "mesh" not in _overrides(args):
                spec = ProblemSpec.from_dict(data["problem"])
    res = solve_job(cfg, args.out, spec, run_id=run_id)
    rep = res["analysis"].report
    print(f"{rep.n_steps} updates, t_L={rep.t_cost}, t_P(S)={rep.t_property.get('S')} -> {args.out}")
    return EXIT_OK


def _cmd_batch(args):
    from .runner import run_batch

    cfg = load_config(args.config, _overrides(args))
    parallelism = args.parallelism or os.cpu_count() or 1
    res = run_batch(cfg, args.out, parallelism)
    n = len(res["manifest"]["jobs"])
    print(f"{n - res['n_failed']}/{n} jobs succeeded -> {args.out}")
    return EXIT_SOLVER if res["n_failed"] else EXIT_OK


def _cmd_props(args):
    from .runner import props_job

    o = _overrides(args)
    res = props_job(args.run_dir, o)
    rep = res["analysis"].report
    print(f"t_L={rep.t_cost}, t_P(S)={rep.t_property.get('S')} -> {args.run_dir}")
    return EXIT_OK


def _cmd_image(args):
    from .runner import image_job

    cfg = load_config(args.config, _overrides(args))
    res = image_job(cfg, args.manifest, args.out)
    print(f"{len(res['result'].frame_indices)} frames, consolidation window "
          f"{res['report']['consolidation_window']} -> {args.out}")
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "solve": _cmd_solve, "batch": _cmd_batch, "props": _cmd_props, "image": _cmd_image}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FrameError as exc:
        print(f"image error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PGMError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
