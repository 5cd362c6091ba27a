"""JSON run configuration: defaults, merging, validation with line numbers."""

from __future__ import annotations

import copy
import json
import re
from pathlib import Path

DEFAULTS = {
    "mesh": {"n_div": 32},
    "problem": {"seed": 0, "n_sinks": 15, "radius": None, "sample_grid_divisions": None},
    "solver": {
        "beta": 1.5,
        "dt": 0.1,
        "max_iter": 300,
        "tau": 1e-12,
        "mu_floor": 1e-10,
        "linear_tol": 1e-10,
        "mu0": 1.0,
        "linear_solver": "cg",
    },
    "extraction": {"threshold_ratio": 0.01},
    "analysis": {"s_values": [1, 2], "p": 1.05},
    "output": {"hypergraphs": "final", "snapshots": True},
    "ensemble": {"n_problems": 10, "betas": [1.2, 1.5, 1.8], "master_seed": 0},
    "image": {"intensity_threshold": 128, "downsample": 1, "window": 3, "permissive": False},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path, ``line`` its source line when known."""

    def __init__(self, message, field=None, line=None, source=None):
        self.field = field
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        prefix = f"{field}: " if field else ""
        super().__init__(f"{where}{prefix}{message}")


def _find_line(text, dotted):
    if not text:
        return None
    key = dotted.rsplit(".", 1)[-1]
    section = dotted.split(".", 1)[0] if "." in dotted else None
    start = 0
    if section:
        m = re.search(rf'"{re.escape(section)}"\s*:', text)
        if m:
            start = m.end()
    m = re.search(rf'"{re.escape(key)}"\s*:', text[start:])
    if not m:
        return None
    return text.count("\n", 0, start + m.start()) + 1


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float))) and not isinstance(v, bool)


def _rules():
    pos = (lambda v: _is_num(v) and v > 0, "must be a positive number")
    posint = (lambda v: _is_int(v) and v >= 1, "must be a positive integer")
    nonneg_int = (lambda v: _is_int(v) and v >= 0, "must be a nonnegative integer")
    opt_pos = (lambda v: v is None or (_is_num(v) and v > 0), "must be null or a positive number")
    opt_posint = (lambda v: v is None or (_is_int(v) and v >= 1), "must be null or a positive integer")
    return {
        "mesh.n_div": posint,
        "problem.seed": nonneg_int,
        "problem.n_sinks": posint,
        "problem.radius": opt_pos,
        "problem.sample_grid_divisions": opt_posint,
        "solver.beta": (lambda v: _is_num(v) and 1 < v < 2, "beta must lie in the open interval (1, 2)"),
        "solver.dt": pos,
        "solver.max_iter": nonneg_int,
        "solver.tau": pos,
        "solver.mu_floor": pos,
        "solver.linear_tol": pos,
        "solver.mu0": pos,
        "solver.linear_solver": (lambda v: v in ("cg", "dense"), "must be 'cg' or 'dense'"),
        "extraction.threshold_ratio": (lambda v: _is_num(v) and 0 < v < 1, "must lie in (0, 1)"),
        "analysis.s_values": (
            lambda v: isinstance(v, list) and v and all(_is_int(s) and s >= 1 for s in v),
            "must be a non-empty list of positive integers",
        ),
        "analysis.p": (lambda v: _is_num(v) and v >= 1, "must be a number >= 1"),
        "output.hypergraphs": (lambda v: v in ("none", "final", "all"), "must be 'none', 'final' or 'all'"),
        "output.snapshots": (lambda v: isinstance(v, bool), "must be true or false"),
        "ensemble.n_problems": posint,
        "ensemble.betas": (
            lambda v: isinstance(v, list) and v and all(_is_num(b) and 1 < b < 2 for b in v),
            "must be a non-empty list of betas, each in the open interval (1, 2)",
        ),
        "ensemble.master_seed": nonneg_int,
        "image.intensity_threshold": (lambda v: _is_num(v) and v >= 0, "must be a nonnegative number"),
        "image.downsample": posint,
        "image.window": posint,
        "image.permissive": (lambda v: isinstance(v, bool), "must be true or false"),
    }


def validate(cfg: dict, text=None, source=None) -> dict:
    for section, value in cfg.items():
        if section not in DEFAULTS:
            raise ConfigError("unknown section", section, _find_line(text, section), source)
        if not isinstance(value, dict):
            raise ConfigError("section must be an object", section, _find_line(text, section), source)
        for key in value:
            if key not in DEFAULTS[section]:
                dotted = f"{section}.{key}"
                raise ConfigError("unknown field", dotted, _find_line(text, dotted), source)
    for dotted, (check, message) in _rules().items():
        section, key = dotted.split(".")
        if not check(cfg[section][key]):
            raise ConfigError(f"{message} (got {cfg[section][key]!r})", dotted, _find_line(text, dotted), source)
    return cfg


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides``; validated.

    A run manifest is accepted in place of a config file; its embedded
    config snapshot is used.
    """
    cfg = copy.deepcopy(DEFAULTS)
    text = None
    source = None
    if path is not None:
        source = str(path)
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, source=source) from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object", source=source, line=1)
        if "config" in data and isinstance(data["config"], dict) and "kind" in data:
            data = data["config"]
            text = None
        cfg = validate(merge(cfg, data), text, source)
    if overrides:
        cfg = validate(merge(cfg, overrides), source="command line")
    return cfg
