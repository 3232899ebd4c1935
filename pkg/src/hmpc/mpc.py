"""Receding-horizon loop: solve, apply the optimal input up to the control-horizon trigger, repeat."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .costs import CostSpec, stage_cost
from .horizon import ControlHorizon, PredictionHorizon
from .hybrid_time import TIME_TOL, HybridTime
from .ocp import OcpOptions, OcpSolution, solve
from .plant import HybridPlant, SolutionPair
from .simulator import SimBudget

ASSERT_LEVELS = ("off", "feasibility", "feasibility+descent")


class MpcError(RuntimeError):
    """Base class for receding-horizon failures."""


class MpcInfeasibleStart(MpcError):
    """No feasible candidate from the initial state."""


class RecursiveFeasibilityError(MpcError):
    """A re-optimization after a feasible one came back infeasible."""

    def __init__(self, message: str, trace: "MpcTrace", result: OcpSolution):
        super().__init__(message)
        self.trace = trace
        self.result = result


class DescentError(MpcError):
    def __init__(self, report: "DescentReport", trace: "MpcTrace"):
        super().__init__(report.summary())
        self.report = report
        self.trace = trace


@dataclass(frozen=True)
class MpcConfig:
    horizon: PredictionHorizon
    cost: CostSpec
    control: ControlHorizon = ControlHorizon()
    budget: SimBudget = SimBudget()
    assert_level: str = "feasibility"
    ocp: OcpOptions = OcpOptions()
    descent_tol: float = 5e-4

    def __post_init__(self):
        if self.assert_level not in ASSERT_LEVELS:
            raise ValueError(f"assert_level must be one of {ASSERT_LEVELS}, got {self.assert_level!r}")
        if self.control.trigger == "fixed-budget":
            T = self.horizon
            self.control.check_against(T, T.J, T.thresholds[0] / max(T.J, 1))


@dataclass
class MpcStep:
    time: HybridTime  # optimization time (T_i, J_i)
    state: np.ndarray
    value: float  # optimal cost at this step
    applied_until: HybridTime  # end of the applied piece, relative to ``time``
    applied_cost: float  # stage cost accumulated over the applied piece
    prediction: SolutionPair
    summary: dict
    wall_time: float


@dataclass
class MpcTrace:
    sol: SolutionPair
    steps: list[MpcStep] = field(default_factory=list)
    termination: str = ""

    @property
    def optimization_times(self) -> list[HybridTime]:
        return [s.time for s in self.steps]

    @property
    def values(self) -> list[float]:
        return [s.value for s in self.steps]

    def summary(self) -> dict:
        return {
            "termination": self.termination,
            "steps": len(self.steps),
            "optimization_times": [[s.time.t, s.time.j] for s in self.steps],
            "values": [s.value for s in self.steps],
            "applied_costs": [s.applied_cost for s in self.steps],
            "ocp": [s.summary for s in self.steps],
            "wall_time": sum(s.wall_time for s in self.steps),
        }


def _applied_piece(pred: SolutionPair, trig: HybridTime, t_room: float, j_room: int) -> SolutionPair:
    """``pred`` up to the trigger, cut further so the run budget is not exceeded."""
    end = trig
    for j in range(min(trig.j, pred.J) + 1):
        a = pred.arcs[j]
        if j == j_room:
            end = HybridTime(min(a.t0, t_room) if a.t0 <= t_room else a.t0, j)
            break
        t_end = a.t1 if j < trig.j else trig.t
        if t_end >= t_room - TIME_TOL and a.t0 <= t_room:
            end = HybridTime(min(t_room, t_end), j)
            break
    if end.close_to(pred.terminal_time, TIME_TOL) and end.j == pred.J:
        return pred
    return pred.truncate(end)


def run(plant: HybridPlant, cfg: MpcConfig, x0) -> MpcTrace:
    """Closed-loop solution pair from ``x0`` under the receding-horizon rule of ``cfg``.

    Raises ``MpcInfeasibleStart`` when the first problem is infeasible and,
    with assertions on, ``RecursiveFeasibilityError`` or ``DescentError``.
    """
    x = np.asarray(x0, float).reshape(-1)
    t_now, j_now = 0.0, 0
    trace: Optional[MpcTrace] = None
    steps: list[MpcStep] = []
    closed: Optional[SolutionPair] = None
    reason = ""
    budget = cfg.budget
    while True:
        start = time.perf_counter()
        res = solve(plant, cfg.cost, cfg.horizon, x, cfg.ocp)
        elapsed = time.perf_counter() - start
        if not res.feasible:
            if not steps:
                raise MpcInfeasibleStart(f"no feasible candidate from x0={x.tolist()}: {res.residuals.as_dict()}")
            partial = MpcTrace(closed, steps, "infeasible")
            if cfg.assert_level != "off":
                raise RecursiveFeasibilityError(
                    f"re-optimization at ({t_now:.6g}, {j_now}) from x={x.tolist()} is infeasible "
                    f"(residuals {res.residuals.as_dict()}); the previous step was feasible",
                    partial, res,
                )
            reason = "infeasible"
            break
        pred = res.sol
        trig = cfg.control.trigger_time(pred.dom)
        piece = _applied_piece(pred, trig, budget.t_max - t_now, budget.j_max - j_now)
        applied = stage_cost(cfg.cost, piece)
        steps.append(MpcStep(HybridTime(t_now, j_now), x.copy(), res.cost, piece.terminal_time, applied,
                             pred, res.summary(), elapsed))
        closed = piece if closed is None else closed.concatenate(piece)
        end = piece.terminal_time
        if end.t + end.j <= TIME_TOL:
            reason = "no-progress"
            break
        t_now, j_now = t_now + end.t, j_now + end.j
        x = piece.terminal_state
        if t_now >= budget.t_max - TIME_TOL:
            reason = "t_max"
            break
        if j_now >= budget.j_max:
            reason = "j_max"
            break
    closed.termination = reason
    trace = MpcTrace(closed, steps, reason)
    if cfg.assert_level == "feasibility+descent":
        report = assert_descent(trace, cfg.descent_tol)
        if not report.ok:
            raise DescentError(report, trace)
    return trace


@dataclass
class DescentReport:
    checked: int
    tol: float
    violations: list = field(default_factory=list)  # (step, value_next, bound)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return f"descent holds at all {self.checked} steps (tol {self.tol:g})"
        lines = [f"descent fails at {len(self.violations)} of {self.checked} steps (tol {self.tol:g}):"]
        lines += [f"  step {i}: J*={v:.9g} > bound {b:.9g}" for i, v, b in self.violations]
        return "\n".join(lines)


def assert_descent(trace: MpcTrace, tol: float = 5e-4) -> DescentReport:
    """Check ``J*_{i+1} <= J*_i - applied stage cost_i + tol`` for consecutive steps."""
    rep = DescentReport(max(len(trace.steps) - 1, 0), tol)
    for i in range(len(trace.steps) - 1):
        cur, nxt = trace.steps[i], trace.steps[i + 1]
        bound = cur.value - cur.applied_cost + tol
        if not (nxt.value <= bound or math.isinf(tol)):
            rep.violations.append((i, nxt.value, bound))
    return rep
