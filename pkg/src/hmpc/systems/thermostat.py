"""Room temperature with an on/off heater; the input toggles the heater at jumps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..costs import CostSpec, TargetSet
from ..horizon import make_generic
from ..plant import Feedback, HybridPlant
from .base import Bundle, InvalidParams

LOGIC_TOL = 1e-9


@dataclass(frozen=True)
class ThermostatParams:
    z_o: float = 5.0
    z_delta: float = 10.0
    z_min: float = 7.0
    z_max: float = 9.0
    a_hot: float = 1.0
    a_cold: float = 1.0
    a_on: float = 0.5
    b_hot: float = 1.0
    b_on_hot: float = 0.5
    b_ss: float = 0.1
    b_on_ss: float = 0.1
    b_cold: float = 1.0
    N: int = 2
    delta: float = 0.5

    def validate(self):
        if not self.z_o < self.z_min < self.z_max < self.z_o + self.z_delta:
            raise InvalidParams("need z_o < z_min < z_max < z_o + z_delta")
        if not 0 < self.a_hot <= self.z_max - self.z_o:
            raise InvalidParams(f"a_hot must lie in (0, z_max - z_o], got {self.a_hot}")
        if not self.a_cold > 0:
            raise InvalidParams("a_cold must be positive")
        if self.a_on < 0:
            raise InvalidParams("a_on must be nonnegative")
        if not 0 < self.b_hot <= 1:
            raise InvalidParams(f"b_hot must lie in (0, 1], got {self.b_hot}")
        if min(self.b_on_hot, self.b_ss, self.b_on_ss, self.b_cold) < 0:
            raise InvalidParams("jump-cost weights must be nonnegative")


def _logic_gap(q: float) -> float:
    return min(abs(q), abs(q - 1.0))


def thermostat(params: ThermostatParams | None = None, **overrides) -> Bundle:
    p = params or ThermostatParams()
    if overrides:
        p = ThermostatParams(**{**p.__dict__, **overrides})
    p.validate()
    z_o, z_d, z_lo, z_hi = p.z_o, p.z_delta, p.z_min, p.z_max

    def flow_map(x, u):
        return np.array([0.0, -x[1] + z_o + z_d * x[0]])

    def jump_map(x, u):
        return np.array([1.0 - x[0], x[1]])

    def flow_set(x, u, tol):
        return _logic_gap(x[0]) <= tol and abs(u[0]) <= tol

    def jump_set(x, u, tol):
        return _logic_gap(x[0]) <= tol and abs(u[0] - 1.0) <= tol

    def flow_guard(x, u):
        return max(_logic_gap(x[0]), abs(u[0]))

    def closed_form(x, u, t):
        q = x[0]
        eq = z_o + z_d * q
        return np.array([q, eq + (x[1] - eq) * math.exp(-t)])

    plant = HybridPlant(
        state_dim=2,
        input_dim=1,
        flow_map=flow_map,
        jump_map=jump_map,
        flow_guard=flow_guard,
        flow_set=flow_set,
        jump_set=jump_set,
        flow_closed_form=closed_form,
        state_triggered=False,
        flow_uses_input=False,
        default_flow_input=np.zeros(1),
        input_bounds=(np.zeros(1), np.ones(1)),
        jump_input_choices=((0.0,), (1.0,)),
        name="thermostat",
    )

    def flow_cost(x, u):
        q, z = x
        if z >= z_hi:
            return p.a_hot * (z - z_hi) + p.a_on * q
        if z <= z_lo:
            return p.a_cold * (z_lo - z)
        return 0.0

    def jump_cost(x, u):
        q, z = x
        if z >= z_hi:
            return p.b_hot * (z - z_hi) ** 2 / 2 + p.b_on_hot * (1 - q)
        if z <= z_lo:
            return p.b_cold * (z - z_lo) ** 2 / 2
        return p.b_ss * (z_hi - z) * (z - z_lo) / 2 + p.b_on_ss * (1 - q)

    def terminal_cost(x):
        q, z = x
        if z >= z_hi:
            return (z - z_hi) ** 2 / 2 * (1 + q)
        if z <= z_lo:
            return (z - z_lo) ** 2 / 2 * (2 - q)
        return 0.0

    cost = CostSpec(
        flow_cost=flow_cost,
        jump_cost=jump_cost,
        terminal_cost=terminal_cost,
        # Every temperature is covered by one of the two pieces for each heater mode.
        terminal_set=lambda x, tol: _logic_gap(x[0]) <= tol,
        terminal_guard=lambda x: _logic_gap(x[0]),
    )

    def in_flow_region(x, tol=LOGIC_TOL):
        return (x[0] < 0.5 and x[1] >= z_lo - tol) or (x[0] >= 0.5 and x[1] <= z_hi + tol)

    def in_jump_region(x, tol=LOGIC_TOL):
        return (x[0] < 0.5 and x[1] <= z_lo + tol) or (x[0] >= 0.5 and x[1] >= z_hi - tol)

    feedback = Feedback(
        kappa_C=lambda x: np.array([0.0 if in_flow_region(x) else 1.0]),
        kappa_D=lambda x: np.array([1.0 if in_jump_region(x) else 0.0]),
    )

    def distance(x):
        gap_z = max(z_lo - x[1], x[1] - z_hi, 0.0)
        return float(math.hypot(_logic_gap(x[0]), gap_z))

    target = TargetSet(
        contains=lambda x: distance(x) <= 1e-12,
        distance=distance,
        name="comfort band",
    )

    return Bundle(
        name="thermostat",
        plant=plant,
        cost=cost,
        feedback=feedback,
        target=target,
        horizon=make_generic(p.N, p.delta),
        params=p,
        closed_loop_guard=lambda x: (x[1] - z_lo) if x[0] < 0.5 else (z_hi - x[1]),
        state_names=("heater", "temperature"),
        input_names=("toggle",),
        sampling_box=(np.array([0.0, z_o]), np.array([1.0, z_o + z_d])),
        jump_sampling_box=(np.array([0.0, z_o]), np.array([1.0, z_o + z_d])),
        discrete_dims={0: (0.0, 1.0)},
    )
