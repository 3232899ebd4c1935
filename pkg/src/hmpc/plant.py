"""Hybrid plants ``H = (C, f, D, g)``, solution pairs and their validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .hybrid_time import TIME_TOL, DomainError, HybridTime, HybridTimeDomain

Array = np.ndarray
StateInputFn = Callable[[Array, Array], Array]
StateInputPredicate = Callable[[Array, Array], bool]
Guard = Callable[[Array, Array], float]

# Default membership slack for predicates derived from guards.
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class HybridPlant:
    """Data of a hybrid plant plus the numerical hooks the solvers use.

    ``flow_guard`` and ``jump_guard`` are signed scalarizations:
    ``C = {flow_guard <= 0}`` and ``D = {jump_guard <= 0}`` (on the closure of
    the state constraints).  When only a guard is given the membership
    predicate is derived from it.  ``jump_guard`` doubles as the event
    function for flows: a flow stops when it reaches ``jump_guard <= 0``.

    ``state_triggered`` says whether jumps are forced by the state reaching
    ``D`` (bouncing ball, sample-and-hold) or selected through the input
    (thermostat).
    """

    state_dim: int
    input_dim: int
    flow_map: StateInputFn
    jump_map: StateInputFn
    flow_guard: Optional[Guard] = None
    jump_guard: Optional[Guard] = None
    flow_set: Optional[Callable[..., bool]] = None
    jump_set: Optional[Callable[..., bool]] = None
    flow_closed_form: Optional[Callable[[Array, Array, float], Array]] = None
    time_to_event: Optional[Callable[[Array, Array], Optional[float]]] = None
    state_triggered: bool = True
    flow_uses_input: bool = True
    default_flow_input: Optional[Array] = None
    input_bounds: Optional[tuple[Array, Array]] = None
    jump_input_choices: Optional[tuple] = None
    name: str = "plant"

    def __post_init__(self):
        if self.state_dim <= 0 or self.input_dim < 0:
            raise ValueError("state_dim must be positive and input_dim nonnegative")
        if self.flow_set is None and self.flow_guard is None:
            raise ValueError("a flow set needs a predicate or a guard")
        if self.jump_set is None and self.jump_guard is None:
            raise ValueError("a jump set needs a predicate or a guard")

    def in_C(self, x, u, tol: float = MEMBERSHIP_TOL) -> bool:
        x, u = np.asarray(x, float), np.asarray(u, float)
        if self.flow_set is not None:
            return bool(self.flow_set(x, u, tol))
        return bool(self.flow_guard(x, u) <= tol)

    def in_D(self, x, u, tol: float = MEMBERSHIP_TOL) -> bool:
        x, u = np.asarray(x, float), np.asarray(u, float)
        if self.jump_set is not None:
            return bool(self.jump_set(x, u, tol))
        return bool(self.jump_guard(x, u) <= tol)

    def f(self, x, u) -> Array:
        return np.asarray(self.flow_map(np.asarray(x, float), np.asarray(u, float)), float)

    def g(self, x, u) -> Array:
        return np.asarray(self.jump_map(np.asarray(x, float), np.asarray(u, float)), float)

    def zero_input(self) -> Array:
        if self.default_flow_input is not None:
            return np.asarray(self.default_flow_input, float)
        return np.zeros(self.input_dim)


@dataclass(frozen=True)
class Feedback:
    """Static state feedback ``u = kappa_C(x)`` during flows, ``kappa_D(x)`` at jumps."""

    kappa_C: Callable[[Array], Array]
    kappa_D: Callable[[Array], Array]

    def flow(self, x) -> Array:
        return np.atleast_1d(np.asarray(self.kappa_C(np.asarray(x, float)), float))

    def jump(self, x) -> Array:
        return np.atleast_1d(np.asarray(self.kappa_D(np.asarray(x, float)), float))


def close_loop(plant: HybridPlant, fb: Feedback) -> HybridPlant:
    """The autonomous plant ``(C_k, f_k, D_k, g_k)`` obtained by input substitution."""

    def flow_map(x, u):
        return plant.f(x, fb.flow(x))

    def jump_map(x, u):
        return plant.g(x, fb.jump(x))

    def flow_set(x, u, tol):
        return plant.in_C(x, fb.flow(x), tol)

    def jump_set(x, u, tol):
        return plant.in_D(x, fb.jump(x), tol)

    flow_guard = None if plant.flow_guard is None else (lambda x, u: plant.flow_guard(x, fb.flow(x)))
    jump_guard = None if plant.jump_guard is None else (lambda x, u: plant.jump_guard(x, fb.jump(x)))
    closed_form = None
    if plant.flow_closed_form is not None and not plant.flow_uses_input:
        closed_form = lambda x, u, t: plant.flow_closed_form(x, plant.zero_input(), t)
    tte = None
    if plant.time_to_event is not None and not plant.flow_uses_input:
        tte = lambda x, u: plant.time_to_event(x, fb.jump(x))

    return HybridPlant(
        state_dim=plant.state_dim,
        input_dim=0,
        flow_map=flow_map,
        jump_map=jump_map,
        flow_guard=flow_guard,
        jump_guard=jump_guard,
        flow_set=flow_set,
        jump_set=jump_set,
        flow_closed_form=closed_form,
        time_to_event=tte,
        state_triggered=True,
        flow_uses_input=False,
        name=f"{plant.name}+feedback",
    )


# ---------------------------------------------------------------------------
# Solution pairs


@dataclass
class Arc:
    """One flow level of a solution pair: nodes plus a dense-output rule.

    Between nodes the state is a cubic Hermite interpolant of ``(x, dx)``
    unless ``exact`` provides the closed-form flow.  ``u_fn`` gives the flow
    input at any time of the level; ``u`` stores it at the nodes.
    """

    t: Array
    x: Array
    dx: Array
    u: Array
    u_fn: Optional[Callable[[float], Array]] = None
    exact: Optional[Callable[[float], Array]] = None
    _spline: Optional[CubicHermiteSpline] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, float).reshape(-1)
        k = self.t.size
        self.x = np.asarray(self.x, float).reshape(k, -1)
        self.dx = np.asarray(self.dx, float).reshape(k, -1)
        self.u = np.asarray(self.u, float).reshape(k, -1)

    @classmethod
    def point(cls, t: float, x, dx, u) -> "Arc":
        return cls(np.array([t]), np.atleast_2d(x), np.atleast_2d(dx), np.atleast_2d(u))

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    def _hermite(self) -> CubicHermiteSpline:
        if self._spline is None:
            keep = np.concatenate([[True], np.diff(self.t) > 0])
            self._spline = CubicHermiteSpline(self.t[keep], self.x[keep], self.dx[keep], axis=0)
        return self._spline

    def state(self, t: float) -> Array:
        if self.t.size == 1 or self.duration <= 0:
            return self.x[0].copy()
        t = min(max(t, self.t0), self.t1)
        if self.exact is not None:
            return np.asarray(self.exact(t), float)
        return self._hermite()(t)

    def derivative(self, t: float) -> Array:
        """Time derivative of the Hermite dense output (ignores ``exact``)."""
        if self.t.size == 1 or self.duration <= 0:
            return self.dx[0].copy()
        return self._hermite()(min(max(t, self.t0), self.t1), 1)

    def input(self, t: float) -> Array:
        if self.u_fn is not None:
            return np.asarray(self.u_fn(t), float).reshape(-1)
        idx = int(np.searchsorted(self.t, t, side="right")) - 1
        return self.u[min(max(idx, 0), self.t.size - 1)].copy()

    def _eval_node(self, t: float):
        x = self.state(t)
        if self.t.size == 1 or self.duration <= 0:
            dx = self.dx[0]
        elif self.exact is None:
            dx = self.derivative(t)
        else:
            # Interpolate the stored derivative; exact flows use it only for Hermite fallback.
            dx = np.array([np.interp(t, self.t, col) for col in self.dx.T])
        return x, dx, self.input(t)

    def cut(self, t_end: float) -> "Arc":
        """Restriction to ``[t0, t_end]``."""
        t_end = min(max(t_end, self.t0), self.t1)
        if t_end >= self.t1 - TIME_TOL and abs(t_end - self.t1) <= TIME_TOL:
            return self
        keep = self.t < t_end - TIME_TOL
        keep[0] = True
        x, dx, u = self._eval_node(t_end)
        t = np.append(self.t[keep], t_end) if t_end > self.t0 else np.array([self.t0])
        if t_end > self.t0:
            xs = np.vstack([self.x[keep], x])
            dxs = np.vstack([self.dx[keep], dx])
            us = np.vstack([self.u[keep], u])
        else:
            xs, dxs, us = self.x[:1], self.dx[:1], self.u[:1]
        return Arc(t, xs, dxs, us, self.u_fn, self.exact)

    def start_from(self, t_start: float) -> "Arc":
        """Restriction to ``[t_start, t1]``."""
        t_start = min(max(t_start, self.t0), self.t1)
        if t_start <= self.t0 + TIME_TOL:
            return self
        keep = self.t > t_start + TIME_TOL
        x, dx, u = self._eval_node(t_start)
        t = np.concatenate([[t_start], self.t[keep]])
        return Arc(t, np.vstack([x, self.x[keep]]), np.vstack([dx, self.dx[keep]]),
                   np.vstack([u, self.u[keep]]), self.u_fn, self.exact)

    def shifted(self, dt: float) -> "Arc":
        if dt == 0:
            return self
        u_fn = None if self.u_fn is None else (lambda t, f=self.u_fn: f(t - dt))
        exact = None if self.exact is None else (lambda t, f=self.exact: f(t - dt))
        return Arc(self.t + dt, self.x, self.dx, self.u, u_fn, exact)

    def merged(self, other: "Arc") -> "Arc":
        """Fuse ``self`` with ``other`` starting where ``self`` ends."""
        if other.t.size == 1 or other.duration <= 0:
            return self
        if self.t.size == 1 or self.duration <= 0:
            return other
        split = self.t1
        t = np.concatenate([self.t, other.t[1:]])
        x = np.vstack([self.x, other.x[1:]])
        dx = np.vstack([self.dx, other.dx[1:]])
        u = np.vstack([self.u, other.u[1:]])
        a, b = self, other

        def u_fn(s):
            return a.input(s) if s < split else b.input(s)

        exact = None
        if a.exact is not None and b.exact is not None:
            exact = lambda s: a.exact(s) if s <= split else b.exact(s)
        merged = Arc(t, x, dx, u, u_fn, exact)
        if exact is None:
            # Keep the fused arc's dense output faithful on both sides.
            merged.exact = lambda s: a.state(s) if s <= split else b.state(s)
        return merged


@dataclass
class SolutionPair:
    """A hybrid arc and hybrid input on one compact hybrid time domain."""

    arcs: list[Arc]
    jump_inputs: list[Array]
    termination: str = ""

    def __post_init__(self):
        if len(self.arcs) != len(self.jump_inputs) + 1:
            raise ValueError("need exactly one more flow level than jumps")
        self.jump_inputs = [np.atleast_1d(np.asarray(v, float)) for v in self.jump_inputs]

    @property
    def dom(self) -> HybridTimeDomain:
        return HybridTimeDomain([self.arcs[0].t0] + [a.t1 for a in self.arcs])

    @property
    def J(self) -> int:
        return len(self.jump_inputs)

    @property
    def terminal_time(self) -> HybridTime:
        return HybridTime(self.arcs[-1].t1, self.J)

    @property
    def initial_state(self) -> Array:
        return self.arcs[0].x[0].copy()

    @property
    def terminal_state(self) -> Array:
        return self.arcs[-1].x[-1].copy()

    def _check(self, t: float, j: int):
        if not 0 <= j <= self.J:
            raise DomainError(f"level {j} not in solution with J={self.J}")
        a = self.arcs[j]
        if not a.t0 - TIME_TOL <= t <= a.t1 + TIME_TOL:
            raise DomainError(f"({t}, {j}) is not in the domain")

    def x(self, t: float, j: int) -> Array:
        self._check(t, j)
        a = self.arcs[j]
        if abs(t - a.t1) <= TIME_TOL:
            return a.x[-1].copy()
        if abs(t - a.t0) <= TIME_TOL:
            return a.x[0].copy()
        return a.state(t)

    def u(self, t: float, j: int) -> Array:
        """Input value; at a jump instant of level ``j`` it is the jump input."""
        self._check(t, j)
        a = self.arcs[j]
        if j < self.J and abs(t - a.t1) <= TIME_TOL:
            return self.jump_inputs[j].copy()
        return a.input(t)

    def pre_jump_states(self) -> list[Array]:
        return [self.arcs[j].x[-1].copy() for j in range(self.J)]

    def truncate(self, ht) -> "SolutionPair":
        t, j = ht
        self._check(t, j)
        arcs = self.arcs[:j] + [self.arcs[j].cut(t)]
        return SolutionPair(arcs, self.jump_inputs[:j], "truncated")

    def suffix(self, ht) -> "SolutionPair":
        """The pair from ``ht`` onward, re-based at hybrid time (0, 0)."""
        t, j = ht
        self._check(t, j)
        arcs = [self.arcs[j].start_from(t)] + self.arcs[j + 1 :]
        return SolutionPair([a.shifted(-t) for a in arcs], self.jump_inputs[j:], self.termination)

    def concatenate(self, other: "SolutionPair") -> "SolutionPair":
        T = self.arcs[-1].t1
        shifted = [a.shifted(T) for a in other.arcs]
        head = self.arcs[-1].merged(shifted[0])
        arcs = self.arcs[:-1] + [head] + shifted[1:]
        return SolutionPair(arcs, self.jump_inputs + other.jump_inputs, other.termination)

    def rows(self):
        """Yield ``(t, j, x, u)`` for every node; a jump yields two rows."""
        for j, a in enumerate(self.arcs):
            for k in range(a.t.size):
                u = a.u[k]
                if j < self.J and k == a.t.size - 1:
                    u = self.jump_inputs[j]
                yield float(a.t[k]), j, a.x[k], u


def solution_from_rows(t: Sequence[float], j: Sequence[int], x: Array, u: Array) -> SolutionPair:
    """Rebuild a pair from tabulated nodes (derivatives by finite differences)."""
    t = np.asarray(t, float)
    j = np.asarray(j, int)
    x = np.atleast_2d(np.asarray(x, float))
    u = np.atleast_2d(np.asarray(u, float))
    arcs, jumps = [], []
    for level in range(int(j.max()) + 1):
        idx = np.flatnonzero(j == level)
        tt, xx, uu = t[idx], x[idx], u[idx]
        if tt.size > 1 and tt[-1] > tt[0]:
            dx = np.gradient(xx, tt, axis=0, edge_order=1)
        else:
            dx = np.zeros_like(xx)
        arcs.append(Arc(tt, xx, dx, uu))
        if level < int(j.max()):
            jumps.append(uu[-1])
    return SolutionPair(arcs, jumps)


# ---------------------------------------------------------------------------
# Validation


@dataclass
class Violation:
    condition: str  # "S0", "S1", "S2", "domain"
    where: tuple
    message: str
    value: float = float("nan")


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    checked_nodes: int = 0

    @property
    def valid(self) -> bool:
        return not self.violations

    def conditions(self) -> set[str]:
        return {v.condition for v in self.violations}

    def __bool__(self) -> bool:
        return self.valid

    def summary(self) -> str:
        if self.valid:
            return f"valid ({self.checked_nodes} nodes checked)"
        lines = [f"{len(self.violations)} violation(s):"]
        lines += [f"  {v.condition} at {v.where}: {v.message}" for v in self.violations[:20]]
        return "\n".join(lines)


def _interval_residual(plant: HybridPlant, arc: Arc, k: int) -> float:
    """``|x_{k+1} - x_k - int f(x(s), u(s)) ds|`` over one node interval.

    The integral runs along the Hermite dense output (Simpson's rule), so this
    is the dense-output derivative residual integrated over the interval.  The
    integrated form stays at integrator accuracy, while pointwise derivative
    residuals of a cubic interpolant amplify node errors by ``1/h``.
    """
    t0, t1 = arc.t[k], arc.t[k + 1]
    h = t1 - t0
    xa, xb, da, db = arc.x[k], arc.x[k + 1], arc.dx[k], arc.dx[k + 1]
    xm = 0.5 * (xa + xb) + h * (da - db) / 8
    tm = t0 + 0.5 * h
    fa = plant.f(xa, arc.u[k])
    fm = plant.f(xm, arc.input(tm))
    fb = plant.f(xb, arc.u[k + 1])
    return float(np.max(np.abs(xb - xa - h * (fa + 4 * fm + fb) / 6)))


def validate_solution(plant: HybridPlant, sol: SolutionPair, tol: float = 1e-6) -> ValidationReport:
    """Check the solution-pair conditions S0, S1 and S2 on the stored nodes.

    S1 covers membership in ``C`` at every node and the flow equation on every
    node interval (see ``_interval_residual``).  A node whose two adjacent
    intervals both fail is reported as the culprit.
    """
    rep = ValidationReport()
    x0, u0 = sol.x(0.0, 0), sol.u(0.0, 0)
    if not (plant.in_C(x0, u0, tol) or plant.in_D(x0, u0, tol)):
        rep.violations.append(Violation("S0", (0.0, 0), "initial point not in C or D"))

    for j, a in enumerate(sol.arcs):
        if j > 0 and abs(a.t0 - sol.arcs[j - 1].t1) > TIME_TOL:
            rep.violations.append(Violation("domain", (a.t0, j), "level does not start at previous jump time"))
        if np.any(np.diff(a.t) < -TIME_TOL):
            rep.violations.append(Violation("domain", (a.t0, j), "node times decrease"))
        rep.checked_nodes += a.t.size
        if a.duration <= 0:
            continue
        for k in range(a.t.size):
            if not plant.in_C(a.x[k], a.u[k], tol):
                rep.violations.append(Violation("S1", (float(a.t[k]), j, k), "state/input not in C"))
        res = [
            _interval_residual(plant, a, k) if a.t[k + 1] > a.t[k] else 0.0 for k in range(a.t.size - 1)
        ]
        bad = [r > tol * (1.0 + float(np.max(np.abs(a.x[k])))) for k, r in enumerate(res)]
        k = 0
        while k < len(bad):
            if not bad[k]:
                k += 1
                continue
            # A corrupted interior node spoils both intervals that share it.
            paired = k + 1 < len(bad) and bad[k + 1]
            node = 0 if (k == 0 and not paired) else k + 1
            worst = max(res[k], res[k + 1]) if paired else res[k]
            rep.violations.append(Violation("S1", (float(a.t[node]), j, node), "flow residual exceeds tolerance", worst))
            k += 2 if paired else 1

    for j in range(sol.J):
        before = sol.arcs[j].x[-1]
        after = sol.arcs[j + 1].x[0]
        v = sol.jump_inputs[j]
        t = sol.arcs[j].t1
        if not plant.in_D(before, v, tol):
            rep.violations.append(Violation("S2", (t, j), "not in D"))
            continue
        err = float(np.max(np.abs(plant.g(before, v) - after))) if after.size else 0.0
        if err > tol:
            rep.violations.append(Violation("S2", (t, j), "jump map mismatch", err))
    return rep
