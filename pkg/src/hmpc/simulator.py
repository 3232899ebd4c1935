"""Hybrid-time simulation with closed-form or Runge-Kutta flows and event detection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45

from .hybrid_time import TIME_TOL
from .plant import Arc, Feedback, HybridPlant, SolutionPair

# Inter-jump flow shorter than this, for ZENO_COUNT jumps in a row, stops a run.
ZENO_DT = 1e-9
ZENO_COUNT = 10


class SimulationError(RuntimeError):
    """Base class for simulation failures."""


class InfeasibleStartError(SimulationError):
    """The initial point is in neither C nor D."""


class IntegrationError(SimulationError):
    """The integrator failed or an event could not be localized."""


class FlowEscapeError(IntegrationError):
    """The flow left C without reaching D."""


@dataclass(frozen=True)
class SimBudget:
    t_max: float = 10.0
    j_max: int = 100
    max_step: float = 0.05
    rtol: float = 1e-10
    atol: float = 1e-12

    def __post_init__(self):
        if not (self.t_max > 0 or self.j_max > 0):
            raise ValueError("budget needs t_max > 0 or j_max > 0")
        if self.t_max < 0 or self.j_max < 0:
            raise ValueError("budget limits must be nonnegative")
        if not (self.max_step > 0 and self.rtol > 0 and self.atol > 0):
            raise ValueError("max_step and tolerances must be positive")

    @property
    def validation_tol(self) -> float:
        return 10 * max(self.rtol, self.atol)


# ---------------------------------------------------------------------------
# Input policies


class InputPolicy:
    """Supplies flow and jump inputs; subclasses decide the jump rule."""

    open_loop = False

    def flow_input(self, t: float, j: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jump_input(self, t: float, j: int, x: np.ndarray) -> Optional[np.ndarray]:
        """Input to use if a jump happens now; ``None`` once the input is used up."""
        raise NotImplementedError

    def flow_limit(self, j: int) -> float:
        """Longest flow allowed at level ``j`` before the input runs out."""
        return np.inf

    def event_guard(self, plant: HybridPlant, j: int):
        """Scalar function of the state whose sign change stops a flow."""
        if plant.jump_guard is None and plant.jump_set is None:
            return None

        def guard(x, t):
            v = self.jump_input(t, j, x)
            if v is None:
                v = plant.zero_input()
            if plant.jump_guard is not None:
                return float(plant.jump_guard(x, v))
            return -1.0 if plant.in_D(x, v, 0.0) else 1.0

        return guard


@dataclass
class ConstantInput(InputPolicy):
    value: np.ndarray

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, float))

    def flow_input(self, t, j, x):
        return self.value

    def jump_input(self, t, j, x):
        return self.value


@dataclass
class FeedbackPolicy(InputPolicy):
    """Static feedback; ``jump_guard`` (optional) scalarizes the closed-loop jump set."""

    feedback: Feedback
    jump_guard: Optional[Callable[[np.ndarray], float]] = None

    def flow_input(self, t, j, x):
        return self.feedback.flow(x)

    def jump_input(self, t, j, x):
        return self.feedback.jump(x)

    def event_guard(self, plant, j):
        if self.jump_guard is not None:
            return lambda x, t: float(self.jump_guard(x))
        return super().event_guard(plant, j)


@dataclass
class InputSequence(InputPolicy):
    """Constant flow input, prescribed jump inputs in order, then a bounded final flow."""

    flow_value: np.ndarray
    jump_values: Sequence[np.ndarray]
    tail_duration: float = np.inf

    def __post_init__(self):
        self.flow_value = np.atleast_1d(np.asarray(self.flow_value, float))
        self.jump_values = [np.atleast_1d(np.asarray(v, float)) for v in self.jump_values]

    def flow_input(self, t, j, x):
        return self.flow_value

    def jump_input(self, t, j, x):
        return self.jump_values[j] if j < len(self.jump_values) else None

    def flow_limit(self, j):
        return self.tail_duration if j >= len(self.jump_values) else np.inf


@dataclass
class OpenLoopInput(InputPolicy):
    """A hybrid input on a fixed domain; its domain dictates flows and jumps."""

    jump_times: Sequence[float]
    flow_fn: Callable[[float, int], np.ndarray]
    jump_values: Sequence[np.ndarray]
    open_loop = True

    def __post_init__(self):
        self.jump_values = [np.atleast_1d(np.asarray(v, float)) for v in self.jump_values]
        if len(self.jump_values) != len(self.jump_times) - 2:
            raise ValueError("need one jump input per jump of the domain")

    @classmethod
    def from_solution(cls, sol: SolutionPair) -> "OpenLoopInput":
        arcs = sol.arcs
        return cls(sol.dom.jump_times, lambda t, j: arcs[j].input(t), list(sol.jump_inputs))

    def flow_input(self, t, j, x):
        return np.atleast_1d(np.asarray(self.flow_fn(t, j), float))

    def jump_input(self, t, j, x):
        return self.jump_values[j] if j < len(self.jump_values) else None


def zero_input(plant: HybridPlant) -> ConstantInput:
    return ConstantInput(plant.zero_input())


# ---------------------------------------------------------------------------
# Flow segments


def _locate(guard_at, lo: float, hi: float) -> float:
    """Smallest representable ``t`` in ``(lo, hi]`` with ``guard_at(t) <= 0`` (bisection)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if guard_at(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


def flow_segment(
    plant: HybridPlant,
    x0,
    input_signal,
    t_span: float,
    budget: SimBudget,
    *,
    t0: float = 0.0,
    event_guard=None,
    force_numeric: bool = False,
    check_C: bool = True,
):
    """Flow from ``x0`` for at most ``t_span`` seconds.

    ``input_signal`` is either a constant input or a callable ``(t, x) -> u``
    in absolute time.  ``event_guard(x, t)`` stops the flow at its first
    nonpositive value; a nonpositive value at the start is an event at
    ``t0``.  Returns ``(arc, event_time_or_None)``.
    """
    x0 = np.asarray(x0, float)
    if callable(input_signal):
        u_of = lambda t, x: np.atleast_1d(np.asarray(input_signal(t, x), float))
        constant_u = None
    else:
        constant_u = np.atleast_1d(np.asarray(input_signal, float))
        u_of = lambda t, x: constant_u

    def rhs(t, x):
        return plant.f(x, u_of(t, x))

    def node(t, x):
        u = u_of(t, x)
        return (t, x, plant.f(x, u), u)

    t_span = max(float(t_span), 0.0)
    if event_guard is not None and event_guard(x0, t0) <= 0:
        return Arc.point(t0, x0, rhs(t0, x0), u_of(t0, x0)), t0
    if t_span <= TIME_TOL:
        return Arc.point(t0, x0, rhs(t0, x0), u_of(t0, x0)), None

    input_free = constant_u is not None or not plant.flow_uses_input
    use_closed = plant.flow_closed_form is not None and input_free and not force_numeric
    if use_closed:
        u_ref = constant_u if constant_u is not None else plant.zero_input()
        state_at = lambda t: np.asarray(plant.flow_closed_form(x0, u_ref, t - t0), float)
        t_end, event = _closed_form_event(plant, x0, u_ref, state_at, t0, t_span, budget, event_guard)
        n = max(1, int(np.ceil((t_end - t0) / budget.max_step)))
        grid = np.linspace(t0, t_end, n + 1)
        nodes = [node(t, state_at(t)) for t in grid]
        if event is not None:
            nodes[-1] = node(event, state_at(event))
        exact = state_at
    else:
        nodes, event = _integrate(plant, x0, u_of, rhs, node, t0, t_span, budget, event_guard)
        exact = None

    if check_C:
        for t, x, _, u in nodes[:-1] if event is not None else nodes:
            if not plant.in_C(x, u, max(1e-9, 10 * budget.atol)):
                raise FlowEscapeError(f"flow left C at t={t:.12g} without reaching D")
    t = np.array([n[0] for n in nodes])
    arc = Arc(t, np.array([n[1] for n in nodes]), np.array([n[2] for n in nodes]),
              np.array([n[3] for n in nodes]), exact=exact)
    if constant_u is not None:
        arc.u_fn = lambda s: constant_u
    else:
        arc.u_fn = lambda s, a=arc: u_of(s, a.state(s))
    return arc, event


def _closed_form_event(plant, x0, u_ref, state_at, t0, t_span, budget, event_guard):
    t_end = t0 + t_span
    if event_guard is None:
        return t_end, None
    if plant.time_to_event is not None:
        dt = plant.time_to_event(x0, u_ref)
        if dt is not None and np.isfinite(dt) and dt <= t_span:
            te = t0 + max(float(dt), 0.0)
            return te, te
        if dt is not None:
            return t_end, None
    guard_at = lambda t: event_guard(state_at(t), t)
    grid = np.arange(t0, t_end, budget.max_step)
    grid = np.append(grid[1:], t_end)
    prev = t0
    for t in grid:
        if guard_at(t) <= 0:
            te = _locate(guard_at, prev, t)
            return te, te
        prev = t
    return t_end, None


def _integrate(plant, x0, u_of, rhs, node, t0, t_span, budget, event_guard):
    solver = RK45(rhs, t0, x0, t0 + t_span, max_step=budget.max_step, rtol=budget.rtol, atol=budget.atol)
    nodes = [node(t0, x0.copy())]
    event = None
    while solver.status == "running":
        t_prev = solver.t
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integrator failed at t={solver.t:.6g}: {msg}")
        dense = solver.dense_output()
        if event_guard is not None and event_guard(solver.y, solver.t) <= 0:
            guard_at = lambda s: event_guard(dense(s), s)
            te = _locate(guard_at, t_prev, solver.t)
            if not guard_at(te) <= 0:
                raise IntegrationError(f"event bracketing failed near t={solver.t:.6g}")
            nodes.append(node(te, dense(te)))
            event = te
            break
        nodes.append(node(solver.t, solver.y.copy()))
    return nodes, event


# ---------------------------------------------------------------------------
# Hybrid simulation


def _check_start(plant, x0, policy):
    uf = policy.flow_input(0.0, 0, x0)
    uj = policy.jump_input(0.0, 0, x0)
    in_c = plant.in_C(x0, uf)
    in_d = uj is not None and plant.in_D(x0, uj)
    if not (in_c or in_d):
        raise InfeasibleStartError(f"initial point {x0} is in neither C nor D")


def simulate(
    plant: HybridPlant,
    x0,
    policy: InputPolicy,
    budget: SimBudget,
    *,
    force_numeric: bool = False,
) -> SolutionPair:
    """Generate a solution pair from ``x0`` until the budget or the input runs out.

    Non-open-loop policies jump whenever ``D`` holds.  The returned pair's
    ``termination`` is one of ``t_max``, ``j_max``, ``input_exhausted``,
    ``blocked`` or ``zeno-truncated``.
    """
    x = np.asarray(x0, float).copy()
    if x.shape != (plant.state_dim,):
        raise ValueError(f"x0 must have shape ({plant.state_dim},), got {x.shape}")
    _check_start(plant, x, policy)
    if policy.open_loop:
        return _simulate_open_loop(plant, x, policy, budget, force_numeric)

    t, j = 0.0, 0
    arcs: list[Arc] = []
    jumps: list[np.ndarray] = []
    level_start = 0.0
    short_flows = 0
    reason = ""
    current = None  # flow arc at the current level, if any

    def close_level():
        nonlocal current
        if current is None:
            u = policy.flow_input(t, j, x)
            current = Arc.point(t, x, plant.f(x, u) if plant.in_C(x, u) else np.zeros_like(x), u)
        arcs.append(current)
        current = None

    while True:
        v = policy.jump_input(t, j, x)
        if v is not None and plant.in_D(x, v):
            if j >= budget.j_max:
                reason = "j_max"
                break
            close_level()
            x = plant.g(x, v)
            jumps.append(v)
            j += 1
            dt = t - level_start
            short_flows = short_flows + 1 if 0 < dt < ZENO_DT else 0
            level_start = t
            if budget.t_max > 0 and short_flows >= ZENO_COUNT:
                reason = "zeno-truncated"
                break
            continue
        if v is None and plant.in_D(x, plant.zero_input()):
            reason = "input_exhausted"
            break
        if current is not None:
            reason = "input_exhausted" if policy.flow_limit(j) <= t - level_start + TIME_TOL else "blocked"
            break
        limit = min(budget.t_max - t, policy.flow_limit(j))
        u = policy.flow_input(t, j, x)
        if not plant.in_C(x, u):
            reason = "blocked"
            break
        if limit <= TIME_TOL:
            reason = "t_max" if budget.t_max - t <= TIME_TOL else "input_exhausted"
            break
        if isinstance(policy, (ConstantInput, InputSequence)):
            signal = u
        else:
            signal = lambda s, y, jj=j: policy.flow_input(s, jj, y)
        arc, event = flow_segment(
            plant, x, signal, limit, budget, t0=t, event_guard=policy.event_guard(plant, j),
            force_numeric=force_numeric,
        )
        current = arc
        t, x = arc.t1, arc.x[-1].copy()
        if event is None:
            reason = "t_max" if budget.t_max - t <= TIME_TOL else "input_exhausted"
            break
    close_level()
    return SolutionPair(arcs, jumps, reason)


def _simulate_open_loop(plant, x, policy: OpenLoopInput, budget, force_numeric):
    times = policy.jump_times
    arcs, jumps = [], []
    reason = "input_exhausted"
    for j in range(len(times) - 1):
        a, b = times[j], min(times[j + 1], budget.t_max)
        signal = lambda s, y, jj=j: policy.flow_input(s, jj, y)
        if b > a:
            arc, _ = flow_segment(plant, x, signal, b - a, budget, t0=a, force_numeric=force_numeric)
        else:
            u = policy.flow_input(a, j, x)
            arc = Arc.point(a, x, plant.f(x, u) if plant.in_C(x, u) else np.zeros_like(x), u)
        arcs.append(arc)
        x = arc.x[-1].copy()
        if times[j + 1] > budget.t_max + TIME_TOL:
            reason = "t_max"
            break
        if j == len(times) - 2:
            break
        if j >= budget.j_max:
            reason = "j_max"
            break
        v = policy.jump_values[j]
        if not plant.in_D(x, v):
            reason = "blocked"
            break
        x = plant.g(x, v)
        jumps.append(v)
    if len(arcs) == len(jumps):
        u = policy.flow_input(times[len(jumps)], len(jumps), x)
        arcs.append(Arc.point(arcs[-1].t1, x, plant.f(x, u) if plant.in_C(x, u) else np.zeros_like(x), u))
    return SolutionPair(arcs, jumps, reason)


@dataclass(frozen=True)
class ZenoEstimate:
    ratio: float  # mean ratio of consecutive flow intervals between jumps
    accumulation_time: float  # predicted limit of the jump times

    def describe(self) -> str:
        return f"Zeno behavior: flow intervals shrink by {self.ratio:.4f} per jump, jumps accumulate near t={self.accumulation_time:.6g}"


def zeno_estimate(sol: SolutionPair, window: int = 5, spread: float = 1e-3) -> Optional[ZenoEstimate]:
    """Detect geometrically shrinking flow intervals between the last jumps.

    Returns ``None`` unless the last ``window`` interval ratios are below one
    and agree within ``spread``; the accumulation time extrapolates the
    geometric series.
    """
    times = np.asarray(sol.dom.jump_times[1:-1], float)  # jump instants t_1..t_J
    gaps = np.diff(times)
    if gaps.size < window + 1 or np.any(gaps[-window - 1 :] <= 0):
        return None
    ratios = gaps[-window:] / gaps[-window - 1 : -1]
    r = float(np.mean(ratios))
    if not r < 1 or float(np.ptp(ratios)) > spread:
        return None
    return ZenoEstimate(r, float(times[-1] + gaps[-1] * r / (1 - r)))
