"""Trajectory CSV, run summaries and INI run configuration."""

from __future__ import annotations

import configparser
import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .plant import SolutionPair, solution_from_rows
from .systems import Bundle


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_header(bundle: Bundle, sol: SolutionPair) -> list[str]:
    n, m = bundle.plant.state_dim, bundle.plant.input_dim
    xs = list(bundle.state_names) or [f"x{i}" for i in range(n)]
    us = list(bundle.input_names) or [f"u{i}" for i in range(m)]
    return ["t", "j"] + xs + us + list(bundle.derived)


def write_trajectory(path, bundle: Bundle, sol: SolutionPair, meta: Optional[dict] = None) -> None:
    """One row per stored node; a jump appears as a pre-jump and a post-jump row.

    Comment lines carry the plant, the jump times and ``J``.  The input
    column holds the jump input on pre-jump rows.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# plant={bundle.name}\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={val}\n")
        fh.write("# jump_times=" + ",".join(_fmt(t) for t in sol.dom.jump_times) + "\n")
        fh.write(f"# J={sol.J}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(bundle, sol))
        for t, j, x, u in sol.rows():
            derived = [fn(x) for fn in bundle.derived.values()]
            w.writerow([_fmt(t), j] + [_fmt(v) for v in x] + [_fmt(v) for v in u] + [_fmt(v) for v in derived])


def read_trajectory(path, state_dim: int, input_dim: int):
    """Return ``(meta, t, j, x, u)`` from a trajectory CSV."""
    meta: dict = {}
    rows = []
    with Path(path).open() as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            else:
                lines.append(line)
        reader = csv.reader(lines)
        next(reader)
        for r in reader:
            rows.append([float(v) for v in r])
    arr = np.array(rows, float)
    t, j = arr[:, 0], arr[:, 1].astype(int)
    x = arr[:, 2 : 2 + state_dim]
    u = arr[:, 2 + state_dim : 2 + state_dim + input_dim]
    return meta, t, j, x, u


def load_solution(path, state_dim: int, input_dim: int) -> SolutionPair:
    _, t, j, x, u = read_trajectory(path, state_dim, input_dim)
    return solution_from_rows(t, j, x, u)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


def read_config(path) -> dict[str, dict[str, str]]:
    """INI file as nested dicts; section and key names are lower-cased."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    return {s.lower(): {k.lower(): v for k, v in parser[s].items()} for s in parser.sections()}
