"""``hmpc`` command line: simulate, ocp, mpc, verify and list-plants.

Exit codes: 0 success, 1 infeasible problem or failed check, 2 configuration
error, 3 solver or integration failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import systems
from .horizon import HorizonError, parse_control, parse_horizon
from .io import read_config, write_summary, write_trajectory
from .mpc import ASSERT_LEVELS, MpcConfig, MpcError, MpcInfeasibleStart, RecursiveFeasibilityError, assert_descent, run
from .ocp import OcpOptions, SolverError, solve
from .simulator import FeedbackPolicy, InfeasibleStartError, SimBudget, SimulationError, simulate, zero_input, zeno_estimate
from .verify import (
    PowerWitness,
    SampleCloud,
    check_clf,
    check_pd_conditions,
    check_prop5,
    check_stage_bounds,
    check_terminal_bound,
    fit_terminal_gain,
)

MODES = ("simulate", "ocp", "mpc", "verify", "list-plants")
CHECKS = ("clf", "stage", "terminal", "pd", "prop5")

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str
    plant: str = "bouncing-ball"
    params: dict = field(default_factory=dict)
    x0: Optional[np.ndarray] = None
    horizon: Optional[str] = None
    control: str = "next-jump"
    tmax: float = 10.0
    jmax: int = 30
    max_step: float = 0.05
    input: str = "feedback"
    out: Optional[str] = None
    summary: Optional[str] = None
    seed: int = 0
    samples: int = 1000
    check: str = "clf"
    region: Optional[str] = None
    witness: Optional[str] = None
    epsilon: float = 1.0
    assert_level: str = "feasibility"
    ocp: dict = field(default_factory=dict)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmpc", description="Model predictive control for hybrid systems.")
    p.add_argument("mode", nargs="?", choices=MODES, help="what to run")
    p.add_argument("--config", help="INI file; command-line flags override it")
    p.add_argument("--plant", help="plant name (see list-plants)")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="plant parameter override")
    p.add_argument("--x0", help="initial state, comma separated")
    p.add_argument("--horizon", help='prediction horizon, e.g. "generic(N=5,delta=0.5)" or "band(mu=1.5)"')
    p.add_argument("--control", help='control horizon: "next-jump" or "fixed(Nc=1,delta=0.5)"')
    p.add_argument("--tmax", type=float, help="ordinary-time budget")
    p.add_argument("--jmax", type=int, help="jump budget")
    p.add_argument("--max-step", type=float, help="largest integration or output step")
    p.add_argument("--input", choices=("zero", "feedback"), help="input policy for simulate")
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--summary", help="run summary JSON path (default: next to --out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="sample count for verify")
    p.add_argument("--check", choices=CHECKS, help="verification to run")
    p.add_argument("--region", help="sampling box lo:hi per dimension, comma separated")
    p.add_argument("--witness", help="comparison function a,p meaning a*r^p")
    p.add_argument("--epsilon", type=float, help="neighbourhood radius for terminal, pd and prop5 checks")
    p.add_argument("--assert", dest="assert_level", choices=ASSERT_LEVELS, help="runtime assertions for mpc")
    p.add_argument("--feas-tol", type=float)
    p.add_argument("--seeds", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--penalty-rounds", type=int)
    return p


def _floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in str(text).replace(" ", "").split(",") if v != ""])
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r}") from None


def _param_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if "," in text or text.startswith("["):
        return [[float(v) for v in row.split(",")] for row in text.strip("[]").split(";")]
    return text


def resolve(args: argparse.Namespace) -> RunConfig:
    file_cfg = read_config(args.config) if args.config else {}
    run_sec = file_cfg.get("run", {})
    mode = args.mode or run_sec.get("mode")
    if mode is None:
        raise ConfigError("no mode given (simulate, ocp, mpc, verify or list-plants)")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    cfg = RunConfig(mode=mode)

    casts = {"tmax": float, "jmax": int, "max_step": float, "seed": int, "samples": int, "epsilon": float}
    for key, val in run_sec.items():
        key = key.replace("-", "_")
        if key == "mode":
            continue
        if key == "x0":
            cfg.x0 = _floats(val, "x0")
        elif hasattr(cfg, key):
            setattr(cfg, key, casts.get(key, str)(val))
        else:
            raise ConfigError(f"unknown [run] key {key!r}")
    for key, val in file_cfg.get("ocp", {}).items():
        cfg.ocp[key.replace("-", "_")] = val
    for key, val in file_cfg.get("verify", {}).items():
        key = key.replace("-", "_")
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown [verify] key {key!r}")
        setattr(cfg, key, casts.get(key, str)(val))

    for key in ("plant", "horizon", "control", "tmax", "jmax", "max_step", "input", "out", "summary",
                "seed", "samples", "check", "region", "witness", "epsilon", "assert_level"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    if args.x0 is not None:
        cfg.x0 = _floats(args.x0, "x0")
    for key in ("feas_tol", "seeds", "max_iters", "penalty_rounds"):
        if getattr(args, key) is not None:
            cfg.ocp[key] = getattr(args, key)

    section = cfg.plant.replace("-", "_").lower()
    cfg.params = {k: _param_value(v) for k, v in file_cfg.get(section, {}).items()}
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.params[k.strip()] = _param_value(v.strip())
    if cfg.mode in ("simulate", "ocp", "mpc") and cfg.x0 is None:
        raise ConfigError(f"{cfg.mode} needs --x0")
    if cfg.summary is None and cfg.out is not None:
        cfg.summary = str(Path(cfg.out).with_suffix(".json"))
    return cfg


def _ocp_options(cfg: RunConfig, bundle) -> OcpOptions:
    known = {"feas_tol": float, "seeds": int, "max_iters": int, "penalty_rounds": int, "max_step": float}
    kw = {}
    for key, val in cfg.ocp.items():
        if key not in known:
            raise ConfigError(f"unknown [ocp] key {key!r}")
        kw[key] = known[key](val)
    kw.setdefault("max_step", cfg.max_step)
    return OcpOptions(feedback=bundle.feedback, feedback_guard=bundle.closed_loop_guard, **kw)


def _bundle(cfg: RunConfig):
    try:
        bundle = systems.build(cfg.plant, **cfg.params)
    except KeyError as e:
        raise ConfigError(str(e.args[0])) from None
    if cfg.x0 is not None and cfg.x0.size != bundle.plant.state_dim:
        raise ConfigError(f"x0 has {cfg.x0.size} components; {bundle.name} needs {bundle.plant.state_dim}")
    return bundle


def _emit(cfg: RunConfig, bundle, sol, summary: dict, meta: dict) -> None:
    if cfg.out:
        write_trajectory(cfg.out, bundle, sol, meta)
    if cfg.summary:
        write_summary(cfg.summary, summary)


# ---------------------------------------------------------------------------
# Modes


def _list_plants(cfg: RunConfig) -> int:
    for name in systems.names():
        b = systems.build(name)
        print(f"{name}: state {', '.join(b.state_names)}; input {', '.join(b.input_names)}; "
              f"default horizon {b.horizon.describe()}")
    return EXIT_OK


def _simulate(cfg: RunConfig) -> int:
    bundle = _bundle(cfg)
    budget = SimBudget(t_max=cfg.tmax, j_max=cfg.jmax, max_step=cfg.max_step)
    if cfg.input == "zero":
        policy = zero_input(bundle.plant)
    else:
        policy = FeedbackPolicy(bundle.feedback, bundle.closed_loop_guard)
    start = time.perf_counter()
    sol = simulate(bundle.plant, cfg.x0, policy, budget)
    wall = time.perf_counter() - start
    zeno = zeno_estimate(sol)
    term = sol.terminal_time
    print(f"simulate {bundle.name} from {cfg.x0.tolist()} with {cfg.input} input")
    print(f"termination: {sol.termination}")
    print(f"terminal hybrid time: ({term.t:.6g}, {term.j}); jumps: {sol.J}")
    if zeno is not None:
        print(zeno.describe())
    summary = {
        "mode": "simulate", "plant": bundle.name, "x0": cfg.x0, "termination": sol.termination,
        "terminal_time": [term.t, term.j], "jump_times": list(sol.dom.jump_times), "wall_time": wall,
        "zeno": None if zeno is None else {"ratio": zeno.ratio, "accumulation_time": zeno.accumulation_time},
    }
    _emit(cfg, bundle, sol, summary, {"mode": "simulate", "input": cfg.input})
    return EXIT_OK


def _horizon(cfg: RunConfig, bundle):
    return parse_horizon(cfg.horizon) if cfg.horizon else bundle.horizon


def _ocp(cfg: RunConfig) -> int:
    bundle = _bundle(cfg)
    T = _horizon(cfg, bundle)
    start = time.perf_counter()
    res = solve(bundle.plant, bundle.cost, T, cfg.x0, _ocp_options(cfg, bundle))
    wall = time.perf_counter() - start
    print(f"ocp {bundle.name} from {cfg.x0.tolist()} over {T.describe()}")
    print(f"feasible: {res.feasible}; cost: {res.cost:.12g}; jumps: {res.jump_count}; iterations: {res.iterations}")
    print("residuals: " + ", ".join(f"{k}={v:.3g}" for k, v in res.residuals.as_dict().items() if k != "T_exact"))
    summary = {"mode": "ocp", "plant": bundle.name, "x0": cfg.x0, "horizon": T.describe(),
               "wall_time": wall, **res.summary(), "candidates": res.candidates}
    _emit(cfg, bundle, res.sol, summary, {"mode": "ocp", "horizon": T.describe()})
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def _mpc(cfg: RunConfig) -> int:
    bundle = _bundle(cfg)
    T = _horizon(cfg, bundle)
    mcfg = MpcConfig(
        horizon=T, cost=bundle.cost, control=parse_control(cfg.control),
        budget=SimBudget(t_max=cfg.tmax, j_max=cfg.jmax, max_step=cfg.max_step),
        assert_level=cfg.assert_level, ocp=_ocp_options(cfg, bundle),
    )
    start = time.perf_counter()
    trace = run(bundle.plant, mcfg, cfg.x0)
    wall = time.perf_counter() - start
    descent = assert_descent(trace, mcfg.descent_tol)
    print(f"mpc {bundle.name} from {cfg.x0.tolist()} over {T.describe()}: {len(trace.steps)} optimizations, "
          f"termination {trace.termination}")
    for i, s in enumerate(trace.steps):
        print(f"  step {i}: at ({s.time.t:.6g}, {s.time.j}) J*={s.value:.9g} applied to "
              f"({s.applied_until.t:.6g}, {s.applied_until.j}) stage cost {s.applied_cost:.6g}")
    print(descent.summary())
    summary = {"mode": "mpc", "plant": bundle.name, "x0": cfg.x0, "horizon": T.describe(),
               "control": cfg.control, **trace.summary(), "descent_ok": descent.ok, "wall_time": wall}
    _emit(cfg, bundle, trace.sol, summary, {"mode": "mpc", "horizon": T.describe(), "control": cfg.control})
    return EXIT_OK


def _region(text: str, dim: int):
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != dim:
        raise ConfigError(f"--region needs {dim} lo:hi pairs, got {len(parts)}")
    try:
        pairs = [tuple(float(v) for v in p.split(":")) for p in parts]
    except ValueError:
        raise ConfigError(f"cannot parse region {text!r}") from None
    if any(len(p) != 2 for p in pairs):
        raise ConfigError(f"cannot parse region {text!r}")
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def _witness(text: Optional[str], default: Optional[PowerWitness]) -> Optional[PowerWitness]:
    if text is None:
        return default
    vals = _floats(text, "witness")
    if vals.size not in (1, 2):
        raise ConfigError("--witness expects a or a,p")
    return PowerWitness(float(vals[0]), float(vals[1]) if vals.size == 2 else 1.0)


def _verify(cfg: RunConfig) -> int:
    bundle = _bundle(cfg)
    plant = bundle.plant
    lo, hi = _region(cfg.region, plant.state_dim) if cfg.region else bundle.sampling_box
    u_lo, u_hi = plant.input_bounds if plant.input_bounds is not None else (None, None)
    cloud = SampleCloud(cfg.seed, cfg.samples, lo, hi, input_lo=u_lo, input_hi=u_hi, discrete=bundle.discrete_dims)
    jlo, jhi = bundle.jump_sampling_box if bundle.jump_sampling_box is not None else (lo, hi)
    cloud_D = SampleCloud(cfg.seed + 1, cfg.samples, jlo, jhi, input_lo=u_lo, input_hi=u_hi,
                          discrete=bundle.discrete_dims)
    A = bundle.target
    if cfg.check == "clf":
        rep = check_clf(plant, bundle.cost, bundle.feedback, cloud, cloud_D=cloud_D)
    elif cfg.check == "stage":
        w = _witness(cfg.witness, PowerWitness(0.0))
        rep = check_stage_bounds(plant, bundle.cost, A, w, w, cloud, cloud_D)
    elif cfg.check == "terminal":
        w = _witness(cfg.witness, None)
        if w is None:
            w = PowerWitness(fit_terminal_gain(bundle.cost, A, cfg.epsilon, cloud) * (1 + 1e-9))
        rep = check_terminal_bound(bundle.cost, A, w, cfg.epsilon, cloud)
        rep.notes.append(f"witness {w}")
    elif cfg.check == "pd":
        w = _witness(cfg.witness, PowerWitness(0.01))
        starts, _ = cloud.with_restriction("C", count=min(cfg.samples, 5)).draw(
            lambda x, u: plant.in_C(x, bundle.feedback.flow(x)))
        policy = FeedbackPolicy(bundle.feedback, bundle.closed_loop_guard)
        budget = SimBudget(t_max=cfg.tmax, j_max=cfg.jmax, max_step=cfg.max_step)
        sols = [simulate(plant, x, policy, budget) for x in starts]
        rep = check_pd_conditions(plant, A, sols, w)
    else:
        if bundle.growth_candidate is None:
            raise ConfigError(f"{bundle.name} has no growth candidate for the prop5 check")
        fn, rate = bundle.growth_candidate
        rep = check_prop5(plant, A, fn, rate, cfg.epsilon, None, cloud)
    print(rep.summary())
    if cfg.summary:
        write_summary(cfg.summary, {"mode": "verify", "plant": bundle.name, "seed": cfg.seed, **rep.as_dict()})
    return EXIT_OK if rep.ok else EXIT_INFEASIBLE


_RUNNERS = {"simulate": _simulate, "ocp": _ocp, "mpc": _mpc, "verify": _verify, "list-plants": _list_plants}


def _join_vector_flags(argv: list[str]) -> list[str]:
    """``--x0 -1,0`` would read as a flag; glue such values to their option."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in ("--x0", "--region") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_join_vector_flags(argv))
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve(args)
    except (ConfigError, HorizonError, OSError, ValueError) as e:
        print(f"hmpc: error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return _RUNNERS[cfg.mode](cfg)
    except (InfeasibleStartError, MpcInfeasibleStart, RecursiveFeasibilityError) as e:
        print(f"hmpc: infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, SimulationError, MpcError) as e:
        print(f"hmpc: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, HorizonError, systems.InvalidParams, ValueError) as e:
        print(f"hmpc: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
