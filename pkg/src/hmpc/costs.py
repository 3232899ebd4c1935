"""Hybrid cost functional: flow integrals, jump costs and a terminal cost."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .hybrid_time import TIME_TOL, HybridTime
from .plant import Arc, SolutionPair


class TerminalConstraintError(ValueError):
    """The terminal state is outside the terminal constraint set."""


@dataclass(frozen=True)
class TargetSet:
    """A closed set with a membership test and a Euclidean distance."""

    contains: Callable[[np.ndarray], bool]
    distance: Callable[[np.ndarray], float]
    name: str = "target"

    def __call__(self, x) -> float:
        return float(self.distance(np.asarray(x, float)))


@dataclass(frozen=True)
class CostSpec:
    """Stage costs ``L_C``, ``L_D``, terminal cost ``V`` and terminal set ``X``.

    ``terminal_guard`` is a signed surrogate of ``X`` (nonpositive inside),
    used as a penalty residual.  ``flow_cost_integral(arc, ta, tb)`` may
    return the exact integral of ``L_C`` along a flow arc, or ``None`` to fall
    back to adaptive Simpson quadrature.
    """

    flow_cost: Callable[[np.ndarray, np.ndarray], float]
    jump_cost: Callable[[np.ndarray, np.ndarray], float]
    terminal_cost: Callable[[np.ndarray], float]
    terminal_set: Callable[[np.ndarray, float], bool]
    terminal_guard: Optional[Callable[[np.ndarray], float]] = None
    quadrature_tol: float = 1e-9
    flow_cost_integral: Optional[Callable[[Arc, float, float], Optional[float]]] = None

    def L_C(self, x, u) -> float:
        return float(self.flow_cost(np.asarray(x, float), np.atleast_1d(np.asarray(u, float))))

    def L_D(self, x, u) -> float:
        return float(self.jump_cost(np.asarray(x, float), np.atleast_1d(np.asarray(u, float))))

    def V(self, x) -> float:
        return float(self.terminal_cost(np.asarray(x, float)))

    def in_X(self, x, tol: float = 1e-9) -> bool:
        return bool(self.terminal_set(np.asarray(x, float), tol))

    def X_residual(self, x) -> float:
        """Positive part of the terminal guard, or a 0/1 indicator without one."""
        x = np.asarray(x, float)
        if self.terminal_guard is not None:
            return max(float(self.terminal_guard(x)), 0.0)
        return 0.0 if self.in_X(x) else 1.0


def adaptive_simpson(fn: Callable[[float], float], a: float, b: float, tol: float, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    if b <= a:
        return 0.0
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) * (fa + 4 * flm + fm) / 6
        right = (b - m) * (fm + 4 * frm + fb) / 6
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        else:
            stack.append((a, m, fa, flm, fm, left, eps / 2, depth + 1))
            stack.append((m, b, fm, frm, fb, right, eps / 2, depth + 1))
    return total


def _arc_flow_cost(spec: CostSpec, arc: Arc, ta: float, tb: float) -> float:
    if tb - ta <= TIME_TOL:
        return 0.0
    if spec.flow_cost_integral is not None:
        exact = spec.flow_cost_integral(arc, ta, tb)
        if exact is not None:
            return float(exact)
    # Integrate node interval by node interval so input switches stay on breakpoints.
    cuts = arc.t[(arc.t > ta) & (arc.t < tb)]
    pts = np.concatenate([[ta], cuts, [tb]])
    span = tb - ta
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        u_mid = arc.input(mid)
        integrand = lambda s: spec.L_C(arc.state(s), u_mid)
        total += adaptive_simpson(integrand, a, b, spec.quadrature_tol * (b - a) / span)
    return total


def stage_cost(spec: CostSpec, sol: SolutionPair, up_to: Optional[HybridTime] = None) -> float:
    """Flow integrals plus jump costs, optionally only up to ``up_to``."""
    if up_to is None:
        last_level, t_stop = sol.J, sol.arcs[-1].t1
    else:
        t_stop, last_level = up_to
        sol._check(t_stop, last_level)
    total = 0.0
    for j in range(last_level + 1):
        arc = sol.arcs[j]
        tb = arc.t1 if j < last_level else min(max(t_stop, arc.t0), arc.t1)
        total += _arc_flow_cost(spec, arc, arc.t0, tb)
    for j in range(last_level):
        total += spec.L_D(sol.arcs[j].x[-1], sol.jump_inputs[j])
    return total


def evaluate_cost(spec: CostSpec, sol: SolutionPair, x_tol: float = 1e-6) -> float:
    """Flow integrals, jump costs for ``j < J`` and the terminal cost."""
    xT = sol.terminal_state
    if not spec.in_X(xT, x_tol):
        raise TerminalConstraintError(f"terminal state {xT} is outside X")
    return stage_cost(spec, sol) + spec.V(xT)


def running_cost_up_to(spec: CostSpec, sol: SolutionPair, ht) -> float:
    """Accumulated stage cost over the truncation of ``sol`` at ``ht``."""
    t, j = ht
    return stage_cost(spec, sol, HybridTime(t, j))
