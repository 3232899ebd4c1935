"""Finite-horizon hybrid optimal control by jump-count enumeration and direct transcription.

Every candidate is a rollout that stops at the first hybrid time its domain
enters the prediction horizon.  For plants whose jumps are forced by the
state, the decision variables are the jump inputs (and flow inputs when the
flow map uses them); jump instants follow from event detection.  For plants
whose jumps are chosen through the input, the flow durations before each jump
are decision variables too and discrete jump inputs are enumerated.

Constraint violations (C along flows, D at jumps, X at the end, and a
shortfall when the rollout runs out of jumps before reaching the horizon)
enter an L1 exact penalty whose weight grows by ``penalty_growth`` per round.
The inner solver is bounded Nelder-Mead from deterministic seeds.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .costs import CostSpec, stage_cost
from .horizon import PredictionHorizon, reached
from .hybrid_time import TIME_TOL
from .plant import Arc, Feedback, HybridPlant, SolutionPair
from .simulator import (
    FeedbackPolicy,
    InputSequence,
    OpenLoopInput,
    SimBudget,
    SimulationError,
    flow_segment,
    simulate,
)


class SolverError(RuntimeError):
    """The inner solver produced no finite objective value."""


@dataclass(frozen=True)
class OcpOptions:
    feas_tol: float = 1e-6
    cost_tol: float = 1e-8
    seeds: int = 5
    max_iters: int = 200
    penalty_rounds: int = 6
    penalty_start: float = 10.0
    penalty_growth: float = 10.0
    # Tighter than cost_tol: the cost floor near an optimum is often far from zero.
    xatol: float = 1e-10
    fatol: float = 1e-13
    tie_tol: float = 1e-9
    max_step: float = 0.05
    rtol: float = 1e-10
    atol: float = 1e-12
    feedback: Optional[Feedback] = None
    feedback_guard: Optional[Callable[[np.ndarray], float]] = None
    input_box: Optional[tuple] = None
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.feas_tol > 0:
            raise ValueError("feas_tol must be positive")
        if self.seeds < 1 or self.max_iters < 1 or self.penalty_rounds < 1:
            raise ValueError("seeds, max_iters and penalty_rounds must be at least 1")

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        try:
            return max(1, int(os.environ.get("HMPC_THREADS", "1")))
        except ValueError:
            return 1


@dataclass
class Residuals:
    C: float = 0.0  # largest flow-set violation at flow nodes
    D: float = 0.0  # summed jump-set violations
    X: float = 0.0  # terminal-set violation
    T: float = 0.0  # ordinary time still missing to reach the horizon
    T_exact: bool = True

    def total(self) -> float:
        return self.C + self.D + self.X + self.T

    def worst(self) -> float:
        return max(self.C, self.D, self.X, self.T)

    def as_dict(self) -> dict:
        return {"C": self.C, "D": self.D, "X": self.X, "T": self.T, "T_exact": self.T_exact}


@dataclass(frozen=True)
class Transcription:
    """Decision data of one candidate, read back from its rollout."""

    jump_count: int
    flow_durations: tuple
    flow_inputs: tuple
    jump_inputs: tuple
    terminal_time_mode: str

    def __post_init__(self):
        if len(self.flow_durations) != self.jump_count + 1 or len(self.flow_inputs) != self.jump_count + 1:
            raise ValueError("need one flow duration and one flow input per level")
        if len(self.jump_inputs) != self.jump_count:
            raise ValueError("need one jump input per jump")
        if min(self.flow_durations) < 0:
            raise ValueError("flow durations must be nonnegative")
        if self.terminal_time_mode not in ("fixed", "free-in-interval"):
            raise ValueError(f"unknown terminal time mode {self.terminal_time_mode!r}")

    @classmethod
    def from_solution(cls, sol: SolutionPair, T: PredictionHorizon) -> "Transcription":
        lo, hi = T.level(sol.J)
        return cls(
            jump_count=sol.J,
            flow_durations=tuple(a.duration for a in sol.arcs),
            flow_inputs=tuple(tuple(a.u[0]) for a in sol.arcs),
            jump_inputs=tuple(tuple(v) for v in sol.jump_inputs),
            terminal_time_mode="fixed" if hi - lo <= TIME_TOL else "free-in-interval",
        )


@dataclass
class OcpSolution:
    sol: Optional[SolutionPair]
    cost: float
    feasible: bool
    residuals: Residuals
    jump_count: int
    iterations: int
    transcription: Optional[Transcription] = None
    candidates: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "feasible": self.feasible,
            "cost": self.cost,
            "jump_count": self.jump_count,
            "iterations": self.iterations,
            "residuals": self.residuals.as_dict(),
        }


# ---------------------------------------------------------------------------
# Rollouts


@dataclass
class _Problem:
    plant: HybridPlant
    spec: CostSpec
    T: PredictionHorizon
    x0: np.ndarray
    opts: OcpOptions
    u_lo: np.ndarray
    u_hi: np.ndarray

    def budget(self, lean: bool) -> SimBudget:
        p = self.plant
        exact_events = p.flow_closed_form is not None and (p.time_to_event is not None or not p.state_triggered)
        step = math.inf if lean and exact_events and not p.flow_uses_input else self.opts.max_step
        return SimBudget(t_max=self.T.thresholds[0], j_max=self.T.J, max_step=step,
                         rtol=self.opts.rtol, atol=self.opts.atol)


def _jump_residual(plant: HybridPlant, x, v) -> float:
    if plant.jump_guard is not None:
        return max(float(plant.jump_guard(x, v)), 0.0)
    return 0.0 if plant.in_D(x, v, 0.0) else 1.0


def _flow_residual(plant: HybridPlant, arc: Arc) -> float:
    worst = 0.0
    for x, u in zip(arc.x, arc.u):
        if plant.flow_guard is not None:
            worst = max(worst, float(plant.flow_guard(x, u)))
        elif not plant.in_C(x, u, 0.0):
            worst = max(worst, 1.0)
    return worst


def rollout(
    prob: _Problem,
    jump_input: Callable[[int, np.ndarray], Optional[np.ndarray]],
    durations: Sequence[float] = (),
    flow_inputs: Sequence[np.ndarray] = (),
    *,
    lean: bool = True,
) -> tuple[SolutionPair, Residuals]:
    """Build the candidate for the given decisions, stopping at the first hybrid time in the horizon.

    ``jump_input(k, x)`` gives the input of the ``k``-th jump from pre-jump
    state ``x``, or ``None`` when no jump input is left.
    """
    plant, T = prob.plant, prob.T
    budget = prob.budget(lean)
    res = Residuals()
    t, k, x = 0.0, 0, prob.x0.copy()
    arcs: list[Arc] = []
    jumps: list[np.ndarray] = []
    while True:
        lo, _ = T.level(k)
        if k < len(flow_inputs):
            uf = np.asarray(flow_inputs[k], float)
        else:
            uf = plant.default_flow_input if plant.default_flow_input is not None else plant.zero_input()
        if t >= lo - TIME_TOL:
            arcs.append(Arc.point(t, x, plant.f(x, uf), uf))
            break
        if plant.state_triggered:
            def guard(y, s, kk=k):
                v = jump_input(kk, y)
                v = plant.zero_input() if v is None else v
                if plant.jump_guard is not None:
                    return float(plant.jump_guard(y, v))
                return -1.0 if plant.in_D(y, v, 0.0) else 1.0

            arc, event = flow_segment(plant, x, uf, lo - t, budget, t0=t, event_guard=guard, check_C=False)
            v = jump_input(k, arc.x[-1]) if event is not None else None
            wants_jump = event is not None
        else:
            planned = durations[k] if k < len(durations) else math.inf
            span = min(max(float(planned), 0.0), lo - t)
            arc, _ = flow_segment(plant, x, uf, span, budget, t0=t, check_C=False)
            wants_jump = arc.t1 < lo - TIME_TOL
            v = jump_input(k, arc.x[-1]) if wants_jump else None
        res.C = max(res.C, _flow_residual(plant, arc))
        t, x = arc.t1, arc.x[-1].copy()
        arcs.append(arc)
        if not wants_jump or t >= lo - TIME_TOL:
            break
        if v is None:
            res.T += lo - t
            break
        v = np.atleast_1d(np.asarray(v, float))
        res.D += _jump_residual(plant, x, v)
        jumps.append(v)
        x = plant.g(x, v)
        k += 1
    sol = SolutionPair(arcs, jumps, "horizon")
    res.X = prob.spec.X_residual(sol.terminal_state)
    hit = reached(T, sol.dom)
    res.T_exact = hit is not None and hit.close_to(sol.terminal_time, 1e-9)
    return sol, res


def _cost(prob: _Problem, sol: SolutionPair) -> float:
    return stage_cost(prob.spec, sol) + prob.spec.V(sol.terminal_state)


# ---------------------------------------------------------------------------
# One jump-count subproblem


@dataclass
class _Layout:
    """Decision vector layout for a fixed number of jumps and fixed discrete jump inputs."""

    jumps: int
    choices: Optional[tuple]  # fixed jump inputs, or None when they are variables
    m: int
    state_triggered: bool
    flow_vars: bool

    @property
    def n_jump_vars(self) -> int:
        return 0 if self.choices is not None else self.jumps * self.m

    @property
    def n_duration_vars(self) -> int:
        return 0 if self.state_triggered else self.jumps

    @property
    def n_flow_vars(self) -> int:
        return (self.jumps + 1) * self.m if self.flow_vars else 0

    @property
    def size(self) -> int:
        return self.n_jump_vars + self.n_duration_vars + self.n_flow_vars

    def bounds(self, prob: _Problem) -> tuple[np.ndarray, np.ndarray]:
        top = prob.T.thresholds[0]
        lo = np.concatenate([np.tile(prob.u_lo, self.n_jump_vars // max(self.m, 1)) if self.m else [],
                             np.zeros(self.n_duration_vars),
                             np.tile(prob.u_lo, self.n_flow_vars // max(self.m, 1)) if self.m else []])
        hi = np.concatenate([np.tile(prob.u_hi, self.n_jump_vars // max(self.m, 1)) if self.m else [],
                             np.full(self.n_duration_vars, top),
                             np.tile(prob.u_hi, self.n_flow_vars // max(self.m, 1)) if self.m else []])
        return lo.astype(float), hi.astype(float)

    def decode(self, z: np.ndarray):
        i = self.n_jump_vars
        if self.choices is not None:
            jvals = [np.asarray(c, float) for c in self.choices]
        else:
            jvals = [z[k * self.m : (k + 1) * self.m] for k in range(self.jumps)]
        durations = z[i : i + self.n_duration_vars]
        i += self.n_duration_vars
        flows = [z[i + k * self.m : i + (k + 1) * self.m] for k in range(self.jumps + 1)] if self.flow_vars else []
        return jvals, durations, flows

    def encode(self, jvals, durations, flows) -> np.ndarray:
        parts = []
        if self.choices is None:
            parts += [np.asarray(v, float).reshape(-1) for v in jvals]
        parts.append(np.asarray(durations, float).reshape(-1))
        if self.flow_vars:
            parts += [np.asarray(u, float).reshape(-1) for u in flows]
        return np.concatenate(parts) if parts else np.zeros(0)


def _evaluate(prob: _Problem, layout: _Layout, z: np.ndarray, *, lean: bool = True):
    jvals, durations, flows = layout.decode(z)
    pick = lambda k, x: jvals[k] if k < len(jvals) else None
    sol, res = rollout(prob, pick, durations, flows, lean=lean)
    return sol, res, _cost(prob, sol)


def _seeds(lo: np.ndarray, hi: np.ndarray, count: int) -> list[np.ndarray]:
    mid = 0.5 * (lo + hi)
    alt = np.where(np.arange(lo.size) % 2 == 0, lo, hi)
    alt_inv = np.where(np.arange(lo.size) % 2 == 0, hi, lo)
    out: list[np.ndarray] = []
    for s in (mid, lo, hi, alt, alt_inv):
        if not any(np.array_equal(s, o) for o in out):
            out.append(s.copy())
    # Interior points fill in when corners coincide (low dimension).
    frac = 0.25
    while len(out) < count and frac > 1e-3:
        for s in (lo + frac * (hi - lo), hi - frac * (hi - lo)):
            if len(out) < count and not any(np.allclose(s, o) for o in out):
                out.append(s)
        frac /= 2
    return out[:count]


def _simplex(seed: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Initial simplex whose edges point into the box from ``seed``."""
    n = seed.size
    pts = [seed.copy()]
    span = np.where(hi > lo, hi - lo, 1.0)
    mid = 0.5 * (lo + hi)
    for i in range(n):
        p = seed.copy()
        step = 0.1 * span[i]
        p[i] = seed[i] + (step if seed[i] <= mid[i] else -step)
        pts.append(np.clip(p, lo, hi))
    return np.array(pts)


def _feedback_seed(prob: _Problem, layout: _Layout) -> Optional[np.ndarray]:
    """Decision vector reproducing the auxiliary feedback's jump inputs, when one is given."""
    fb = prob.opts.feedback
    if fb is None or layout.size == 0 or layout.choices is not None:
        return None
    used: list[np.ndarray] = []

    def pick(k, x):
        if k >= layout.jumps:
            return None
        v = np.clip(np.atleast_1d(fb.jump(x)), prob.u_lo, prob.u_hi)
        if k == len(used):
            used.append(v)
        return v

    durations: list[float] = []
    if not prob.plant.state_triggered:
        try:
            sim = simulate(prob.plant, prob.x0, FeedbackPolicy(fb, prob.opts.feedback_guard),
                           SimBudget(t_max=prob.T.thresholds[0], j_max=layout.jumps))
        except SimulationError:
            return None
        times = sim.dom.jump_times
        durations = [times[k + 1] - times[k] for k in range(min(sim.J, layout.jumps))]
        used = list(sim.jump_inputs[: layout.jumps])
    else:
        try:
            rollout(prob, pick, lean=True)
        except SimulationError:
            return None
    mid = 0.5 * (prob.u_lo + prob.u_hi)
    while len(used) < layout.jumps:
        used.append(mid)
    top = prob.T.thresholds[0]
    while len(durations) < layout.n_duration_vars:
        durations.append(top)
    flows = [prob.plant.default_flow_input] * (layout.jumps + 1)
    lo, hi = layout.bounds(prob)
    return np.clip(layout.encode(used, durations, flows), lo, hi)


@dataclass
class _Candidate:
    jumps_allowed: int
    choices: Optional[tuple]
    z: np.ndarray
    cost: float
    residuals: Residuals
    jump_count: int
    iterations: int


def _nelder_mead(objective, seed: np.ndarray, lo: np.ndarray, hi: np.ndarray, opts: OcpOptions,
                 restarts: int = 3) -> tuple[np.ndarray, int]:
    """Nelder-Mead on the box, restarted with a fresh simplex while that still helps.

    Points outside the box score their clipped value plus a distance penalty.
    Clipping vertices instead would let the simplex collapse onto a bound and
    stop there, away from any minimum.
    """

    def boxed(y):
        z = np.clip(y, lo, hi)
        f = objective(z)
        gap = float(np.sum(np.abs(y - z)))
        return f + gap * (1.0 + abs(f)) if gap > 0 and f < 1e300 else f

    z, best, nit = seed, math.inf, 0
    for _ in range(restarts + 1):
        out = minimize(
            boxed, z, method="Nelder-Mead",
            options={"maxiter": opts.max_iters, "xatol": opts.xatol, "fatol": opts.fatol,
                     "initial_simplex": _simplex(z, lo, hi)},
        )
        nit += int(out.nit)
        improved = out.fun < best - max(opts.fatol, 1e-12 * abs(out.fun))
        if out.fun <= best:
            z, best = np.clip(out.x, lo, hi), float(out.fun)
        if not improved:
            break
    return z, nit


def _solve_layout(prob: _Problem, layout: _Layout) -> _Candidate:
    opts = prob.opts
    lo, hi = layout.bounds(prob)
    tol = opts.feas_tol

    def score(z):
        try:
            sol, res, c = _evaluate(prob, layout, np.clip(z, lo, hi))
        except SimulationError:
            return math.inf, None, math.inf
        return c, res, sol.J

    if layout.size == 0:
        c, res, J = score(np.zeros(0))
        if res is None:
            raise SolverError(f"rollout failed for the {layout.jumps}-jump candidate with no free variables")
        return _Candidate(layout.jumps, layout.choices, np.zeros(0), c, res, J, 0)

    seeds = _seeds(lo, hi, opts.seeds)
    fb_seed = _feedback_seed(prob, layout)
    if fb_seed is not None:
        seeds.append(fb_seed)

    best: Optional[tuple] = None  # (feasible, cost or residual, z, res, J)
    iterations = 0
    finite_seen = False
    rho = opts.penalty_start
    carry: list[np.ndarray] = []
    for _ in range(opts.penalty_rounds):
        def objective(z, rho=rho):
            c, res, _ = score(z)
            if res is None or not math.isfinite(c):
                return 1e300
            return c + rho * res.total()

        for s in seeds + carry:
            z, nit = _nelder_mead(objective, s, lo, hi, opts)
            iterations += nit
            c, res, J = score(z)
            if res is None or not math.isfinite(c):
                continue
            finite_seen = True
            feasible = res.worst() <= tol
            key = (not feasible, c if feasible else res.total(), J)
            if best is None or _better(key, best[0], opts.tie_tol):
                best = (key, z, c, res, J)
        if best is not None:
            carry = [best[1]]
            if not best[0][0]:
                break
        rho *= opts.penalty_growth
    if not finite_seen:
        raise SolverError(
            f"no finite objective for the {layout.jumps}-jump candidate from {len(seeds)} seeds "
            f"(x0={prob.x0.tolist()})"
        )
    _, z, c, res, J = best
    return _Candidate(layout.jumps, layout.choices, z, c, res, J, iterations)


def _better(key, other, tie_tol) -> bool:
    if key[0] != other[0]:
        return key[0] < other[0]
    if key[1] < other[1] - tie_tol:
        return True
    if key[1] > other[1] + tie_tol:
        return False
    return key[2] < other[2]


# ---------------------------------------------------------------------------
# Public API


def _problem(plant, spec, T, x0, opts) -> _Problem:
    x0 = np.asarray(x0, float).reshape(-1)
    if x0.size != plant.state_dim:
        raise ValueError(f"x0 must have {plant.state_dim} components, got {x0.size}")
    box = opts.input_box or plant.input_bounds
    if plant.input_dim and box is None:
        raise ValueError("the plant has no input bounds; pass OcpOptions(input_box=(lo, hi))")
    if plant.input_dim:
        u_lo, u_hi = (np.atleast_1d(np.asarray(b, float)) for b in box)
    else:
        u_lo = u_hi = np.zeros(0)
    return _Problem(plant, spec, T, x0, opts, u_lo, u_hi)


def _layouts(prob: _Problem) -> list[_Layout]:
    plant = prob.plant
    out = []
    for n in range(prob.T.J + 1):
        if plant.jump_input_choices:
            for combo in itertools.product(plant.jump_input_choices, repeat=n):
                out.append(_Layout(n, tuple(combo), plant.input_dim, plant.state_triggered, plant.flow_uses_input))
        else:
            out.append(_Layout(n, None, plant.input_dim, plant.state_triggered, plant.flow_uses_input))
    return out


def solve(
    plant: HybridPlant,
    spec: CostSpec,
    T: PredictionHorizon,
    x0,
    opts: Optional[OcpOptions] = None,
) -> OcpSolution:
    """Minimize the hybrid cost over candidates whose first hybrid time in ``T`` is terminal.

    Returns the cheapest feasible candidate across jump counts, ties within
    ``tie_tol`` going to fewer jumps.  When nothing is feasible the result has
    ``feasible=False``, infinite cost and the smallest-residual candidate.
    """
    opts = opts or OcpOptions()
    prob = _problem(plant, spec, T, x0, opts)
    layouts = _layouts(prob)
    workers = min(opts.worker_count(), len(layouts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cands = list(pool.map(lambda L: _solve_layout(prob, L), layouts))
    else:
        cands = [_solve_layout(prob, L) for L in layouts]

    best: Optional[_Candidate] = None
    best_key = None
    for cand in cands:
        feasible = cand.residuals.worst() <= opts.feas_tol
        key = (not feasible, cand.cost if feasible else cand.residuals.total(), cand.jump_count)
        if best is None or _better(key, best_key, opts.tie_tol):
            best, best_key = cand, key
    iterations = sum(c.iterations for c in cands)
    layout = next(L for L in layouts if L.jumps == best.jumps_allowed and L.choices == best.choices)
    sol, res, cost = _evaluate(prob, layout, best.z, lean=False)
    feasible = res.worst() <= opts.feas_tol and res.T_exact
    summaries = [
        {"jumps_allowed": c.jumps_allowed, "jump_count": c.jump_count, "cost": c.cost,
         "residual": c.residuals.worst(), "iterations": c.iterations}
        for c in cands
    ]
    return OcpSolution(
        sol=sol,
        cost=cost if feasible else math.inf,
        feasible=feasible,
        residuals=res,
        jump_count=sol.J,
        iterations=iterations,
        transcription=Transcription.from_solution(sol, T),
        candidates=summaries,
    )


def value(plant, spec, T, x0, opts: Optional[OcpOptions] = None) -> float:
    """Optimal cost from ``x0``; ``inf`` when no feasible candidate is found."""
    return solve(plant, spec, T, x0, opts).cost


# ---------------------------------------------------------------------------
# Brute-force oracle


@dataclass(frozen=True)
class BruteGrid:
    """Grids for the exhaustive oracle.

    ``input_grid`` is applied to every input component of every jump;
    ``duration_grid`` to every flow duration before a jump (input-triggered
    plants only).
    """

    input_grid: tuple
    duration_grid: tuple = ()
    max_jumps: int = 2
    max_points: int = 400
    max_candidates: int = 200_000

    def __post_init__(self):
        object.__setattr__(self, "input_grid", tuple(float(v) for v in np.ravel(self.input_grid)))
        object.__setattr__(self, "duration_grid", tuple(float(v) for v in np.ravel(self.duration_grid)))


class GridTooLarge(ValueError):
    """The requested brute-force grid exceeds the configured limits."""


def brute_force_value(
    plant: HybridPlant,
    spec: CostSpec,
    T: PredictionHorizon,
    x0,
    grid: BruteGrid,
    *,
    x_tol: float = 1e-6,
    max_step: float = 0.05,
) -> float:
    """Smallest cost over a grid of decisions with at most ``grid.max_jumps`` jumps.

    Each grid point is simulated with the plain simulator, truncated at the
    first hybrid time in ``T`` and costed; it shares no code with ``solve``'s
    rollouts.  Returns ``inf`` when no grid point is feasible.
    """
    if grid.max_jumps > 2:
        raise GridTooLarge("the oracle handles at most 2 jumps")
    if len(grid.input_grid) > grid.max_points or len(grid.duration_grid) > grid.max_points:
        raise GridTooLarge(f"at most {grid.max_points} points per variable")
    if not grid.input_grid and plant.input_dim and not plant.jump_input_choices:
        raise GridTooLarge("input_grid is empty")
    m = plant.input_dim
    choices = [np.array(c, float) for c in plant.jump_input_choices] if plant.jump_input_choices else None
    u_points = choices if choices is not None else [np.array(c) for c in itertools.product(grid.input_grid, repeat=m)]
    d_points = list(grid.duration_grid) if not plant.state_triggered else [None]
    if not plant.state_triggered and not d_points:
        raise GridTooLarge("duration_grid is empty for an input-triggered plant")

    top = T.thresholds[0]
    count = sum((len(u_points) * len(d_points)) ** n for n in range(min(grid.max_jumps, T.J) + 1))
    if count > grid.max_candidates:
        raise GridTooLarge(f"{count} candidates exceed the limit {grid.max_candidates}")

    x0 = np.asarray(x0, float)
    budget = SimBudget(t_max=top, j_max=min(grid.max_jumps, T.J), max_step=max_step)
    flow_u = plant.default_flow_input if plant.default_flow_input is not None else plant.zero_input()
    best = math.inf
    for n in range(min(grid.max_jumps, T.J) + 1):
        for vs in itertools.product(u_points, repeat=n):
            for ds in itertools.product(d_points, repeat=n):
                try:
                    if plant.state_triggered:
                        policy = InputSequence(flow_u, list(vs), tail_duration=top)
                    else:
                        times = np.concatenate([[0.0], np.cumsum(ds), [top]])
                        if times[-2] > top:
                            continue
                        policy = OpenLoopInput(list(times), lambda t, j: flow_u, list(vs))
                    sim = simulate(plant, x0, policy, budget)
                except SimulationError:
                    continue
                hit = reached(T, sim.dom)
                if hit is None:
                    continue
                sol = sim.truncate(hit)
                if not spec.in_X(sol.terminal_state, x_tol):
                    continue
                best = min(best, stage_cost(spec, sol) + spec.V(sol.terminal_state))
    return best
