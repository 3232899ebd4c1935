"""Bouncing ball with an impact input: keep the total energy at ``gamma * h``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..costs import CostSpec, TargetSet
from ..horizon import make_generic
from ..plant import Feedback, HybridPlant
from .base import Bundle, InvalidParams


@dataclass(frozen=True)
class BouncingBallParams:
    gamma: float = 9.81
    lam: float = 0.9
    h: float = 3.0
    theta: float = 0.1
    u_max: float = 20.0
    N: int = 5
    delta: float = 0.5

    @property
    def theta_limit(self) -> float:
        """Upper end of the admissible interval for ``theta``."""
        return (2 / math.pi) * (1 - self.lam**4) / (1 + self.lam**4)

    @property
    def target_energy(self) -> float:
        return self.gamma * self.h

    @property
    def rebound_speed(self) -> float:
        return math.sqrt(2 * self.gamma * self.h)

    def validate(self):
        if not self.gamma > 0:
            raise InvalidParams(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.lam <= 1:
            raise InvalidParams(f"lambda must lie in (0, 1], got {self.lam}")
        if self.h < 0:
            raise InvalidParams(f"h must be nonnegative, got {self.h}")
        if not 0 < self.theta < self.theta_limit:
            raise InvalidParams(f"theta must lie in (0, {self.theta_limit:.6g}), got {self.theta}")
        if not self.u_max > 0:
            raise InvalidParams(f"u_max must be positive, got {self.u_max}")


def energy(x, gamma: float) -> float:
    return gamma * x[0] + 0.5 * x[1] ** 2


def bouncing_ball(params: BouncingBallParams | None = None, **overrides) -> Bundle:
    p = params or BouncingBallParams()
    if overrides:
        p = BouncingBallParams(**{**p.__dict__, **overrides})
    p.validate()
    gamma, lam, theta, u_max = p.gamma, p.lam, p.theta, p.u_max
    c_star = p.target_energy
    v_star = p.rebound_speed
    half_pi_theta = theta * math.pi / 2

    def W(x):
        return gamma * x[0] + 0.5 * x[1] ** 2

    def flow_map(x, u):
        return np.array([x[1], -gamma])

    def jump_map(x, u):
        return np.array([0.0, -lam * x[1] + u[0]])

    def flow_guard(x, u):
        return max(-x[0], -u[0], u[0] - u_max)

    def jump_guard(x, u):
        # Nonpositive exactly on D when x1 >= 0.
        return max(x[0], x[1], -u[0], u[0] - u_max)

    def flow_set(x, u, tol):
        return x[0] >= -tol and -tol <= u[0] <= u_max + tol

    def jump_set(x, u, tol):
        return abs(x[0]) <= tol and x[1] <= tol and -tol <= u[0] <= u_max + tol

    def closed_form(x, u, t):
        return np.array([x[0] + x[1] * t - 0.5 * gamma * t * t, x[1] - gamma * t])

    def time_to_event(x, u):
        x1, x2 = x[0], x[1]
        if x1 <= 0 and x2 <= 0:
            return 0.0
        return (x2 + math.sqrt(max(x2 * x2 + 2 * gamma * max(x1, 0.0), 0.0))) / gamma

    plant = HybridPlant(
        state_dim=2,
        input_dim=1,
        flow_map=flow_map,
        jump_map=jump_map,
        flow_guard=flow_guard,
        jump_guard=jump_guard,
        flow_set=flow_set,
        jump_set=jump_set,
        flow_closed_form=closed_form,
        time_to_event=time_to_event,
        state_triggered=True,
        flow_uses_input=False,
        default_flow_input=np.zeros(1),
        input_bounds=(np.zeros(1), np.array([u_max])),
        name="bouncing-ball",
    )

    def flow_cost(x, u):
        w = W(x)
        return theta * gamma * (w - c_star) ** 2 / (1 + 2 * w)

    def jump_cost(x, u):
        x2 = x[1]
        near = 0.5 * (1 - half_pi_theta) * gamma * p.h * (x2 + v_star) ** 2
        if x2 >= -v_star / lam:
            return near
        far = (1 - half_pi_theta) * (0.5 * x2**2 - c_star) ** 2 - (1 + half_pi_theta) * (
            0.5 * lam**2 * x2**2 - c_star
        ) ** 2
        return min(near, far)

    def terminal_cost(x):
        return (1 + theta * math.atan(x[1])) * (W(x) - c_star) ** 2

    def flow_cost_integral(arc, ta, tb):
        # Energy, hence the flow cost, is constant along ballistic flight.
        return flow_cost(arc.state(ta), None) * (tb - ta)

    cost = CostSpec(
        flow_cost=flow_cost,
        jump_cost=jump_cost,
        terminal_cost=terminal_cost,
        terminal_set=lambda x, tol: x[0] >= -tol,
        terminal_guard=lambda x: -x[0],
        flow_cost_integral=flow_cost_integral,
    )

    s_max = math.sqrt(2 * c_star)
    grid = np.linspace(-s_max, s_max, 401)

    def distance(x):
        x = np.asarray(x, float)
        if c_star == 0:
            return float(np.hypot(x[0], x[1]))

        def sq(s):
            return (x[0] - (c_star - 0.5 * s * s) / gamma) ** 2 + (x[1] - s) ** 2

        vals = (x[0] - (c_star - 0.5 * grid**2) / gamma) ** 2 + (x[1] - grid) ** 2
        k = int(np.argmin(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = minimize_scalar(sq, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        return float(math.sqrt(max(min(res.fun, vals[k]), 0.0)))

    target = TargetSet(
        contains=lambda x: x[0] >= 0 and abs(W(x) - c_star) <= 1e-9,
        distance=distance,
        name="energy level set",
    )

    feedback = Feedback(
        kappa_C=lambda x: np.zeros(1),
        kappa_D=lambda x: np.array([max(lam * x[1] + v_star, 0.0)]),
    )

    return Bundle(
        name="bouncing-ball",
        plant=plant,
        cost=cost,
        feedback=feedback,
        target=target,
        horizon=make_generic(p.N, p.delta),
        params=p,
        closed_loop_guard=lambda x: max(x[0], x[1]),
        derived={"W": W},
        state_names=("height", "velocity"),
        input_names=("impulse",),
        sampling_box=(np.array([0.0, -10.0]), np.array([6.0, 10.0])),
        jump_sampling_box=(np.array([0.0, -10.0]), np.array([0.0, 0.0])),
        growth_candidate=(lambda x: (W(x) - c_star) ** 2, 0.0),
    )
