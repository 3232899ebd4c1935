"""Linear plant under zero-order hold, with a quadratic terminal cost that decays exactly along flows.

State ``x = (z, eta, tau)``: plant state, held input and sampling timer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm, solve_discrete_are, solve_discrete_lyapunov

from ..costs import CostSpec, TargetSet
from ..horizon import make_generic
from ..plant import Feedback, HybridPlant
from .base import Bundle, InvalidParams

# Grid size for checking the flow-cost bound over one sampling period.
S_GRID = 101


@dataclass(frozen=True)
class SampleHoldParams:
    """Matrices and design knobs.

    When ``K``, ``P``, ``Q_C`` or ``u_max`` are omitted they are designed:
    ``K`` by discrete LQR on the zero-order-hold model with weights
    ``lqr_Q``/``lqr_R``, ``P`` from a discrete Lyapunov equation with decay
    margin ``exp(-2 sigma T_s)``, ``Q_C`` as a scaled identity under the
    flow bound, and ``u_max`` so that every ``x`` in ``X`` has ``Kz`` in ``U``.
    """

    A: np.ndarray = None
    B: np.ndarray = None
    T_s: float = 0.2
    sigma: float = 5.0
    c: float = 1e6
    K: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    Q_C: Optional[np.ndarray] = None
    u_max: Optional[float] = None
    lqr_Q: Optional[np.ndarray] = None
    lqr_R: float = 1e-3
    N: int = 2

    def __post_init__(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]]) if self.A is None else np.atleast_2d(np.asarray(self.A, float))
        B = np.array([[0.0], [1.0]]) if self.B is None else np.asarray(self.B, float).reshape(A.shape[0], -1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_z(self) -> int:
        return self.A.shape[0]

    @property
    def m_z(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class SampleHoldDesign:
    A_f: np.ndarray
    K: np.ndarray
    H: np.ndarray
    P: np.ndarray
    Q_C: np.ndarray
    u_max: float
    jump_margin: float  # largest eigenvalue of H'PH - exp(-sigma T_s) P
    flow_margin: float  # smallest eigenvalue of the flow-bound gap over the s grid

    def M(self, s: float, T_s: float) -> np.ndarray:
        E = expm(self.A_f * (T_s - s))
        return E.T @ self.P @ E


def flow_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n, m = B.shape
    A_f = np.zeros((n + m, n + m))
    A_f[:n, :n] = A
    A_f[:n, n:] = B
    return A_f


def jump_matrix(K: np.ndarray) -> np.ndarray:
    m, n = K.shape
    A_g = np.zeros((n + m, n + m))
    A_g[:n, :n] = np.eye(n)
    A_g[n:, :n] = K
    return A_g


def design(p: SampleHoldParams) -> SampleHoldDesign:
    """Complete and verify the design; raises ``InvalidParams`` with an eigenvalue report."""
    n, m, T_s, sigma = p.n_z, p.m_z, p.T_s, p.sigma
    if not (T_s > 0 and sigma > 0 and p.c > 0):
        raise InvalidParams("T_s, sigma and c must be positive")
    A_f = flow_matrix(p.A, p.B)
    E = expm(A_f * T_s)
    if p.K is None:
        Ad, Bd = E[:n, :n], E[:n, n:]
        Qw = np.eye(n) if p.lqr_Q is None else np.asarray(p.lqr_Q, float)
        if p.lqr_Q is None and n == 2:
            Qw = np.diag([100.0, 1.0])
        R = np.eye(m) * p.lqr_R
        S = solve_discrete_are(Ad, Bd, Qw, R)
        K = -np.linalg.solve(R + Bd.T @ S @ Bd, Bd.T @ S @ Ad)
    else:
        K = np.asarray(p.K, float).reshape(m, n)
    H = E @ jump_matrix(K)
    decay = np.exp(-sigma * T_s)
    if p.P is None:
        radius = max(abs(np.linalg.eigvals(H)))
        if radius >= decay:
            raise InvalidParams(
                f"spectral radius of H(K) is {radius:.6g}; need < exp(-sigma T_s) = {decay:.6g} for the design"
            )
        rho = decay**2
        P = solve_discrete_lyapunov(H.T / np.sqrt(rho), np.eye(n + m))
        P = 0.5 * (P + P.T)
    else:
        P = np.asarray(p.P, float)
    eig_P = np.linalg.eigvalsh(P)
    if eig_P.min() <= 0:
        raise InvalidParams(f"P is not positive definite: eigenvalues {eig_P}")
    jump_gap = np.linalg.eigvalsh(H.T @ P @ H - decay * P)
    if jump_gap.max() >= 0:
        raise InvalidParams(f"H'PH - exp(-sigma T_s) P is not negative definite: eigenvalues {jump_gap}")
    base = H.T @ P @ H - P
    if np.linalg.eigvalsh(base).max() >= 0:
        raise InvalidParams(f"H'PH - P is not negative definite: eigenvalues {np.linalg.eigvalsh(base)}")

    s_grid = np.linspace(0.0, T_s, S_GRID)
    bounds = []
    for s in s_grid:
        Es = expm(A_f * (T_s - s))
        bounds.append(sigma * np.exp(-sigma * s) * Es.T @ P @ Es)
    if p.Q_C is None:
        floor = min(np.linalg.eigvalsh(b).min() for b in bounds)
        Q_C = 0.99 * floor * np.eye(n + m)
    else:
        Q_C = np.asarray(p.Q_C, float)
    if np.linalg.eigvalsh(Q_C).min() <= 0:
        raise InvalidParams("Q_C must be positive definite")
    flow_gap = min(np.linalg.eigvalsh(b - Q_C).min() for b in bounds)
    if flow_gap < 0:
        raise InvalidParams(f"Q_C exceeds the flow bound on the s grid (gap {flow_gap:.3g})")

    # Largest |Kz| over X: the sublevel set {exp(-sigma s) x1' M(s) x1 <= c}.
    KK = np.hstack([K, np.zeros((m, m))])
    need = 0.0
    for s, b in zip(s_grid, bounds):
        Ms = b / (sigma * np.exp(-sigma * s))
        W_inv = np.linalg.inv(Ms) * np.exp(sigma * s)
        for row in KK:
            need = max(need, np.sqrt(p.c * row @ W_inv @ row))
    u_max = float(need * 1.01) if p.u_max is None else float(p.u_max)
    if u_max < need:
        raise InvalidParams(f"u_max={u_max:.6g} is below max |Kz| = {need:.6g} over X")
    return SampleHoldDesign(A_f, K, H, P, Q_C, u_max, float(jump_gap.max()), float(flow_gap))


def van_loan_gram(A_f: np.ndarray, Q: np.ndarray, duration: float) -> np.ndarray:
    """``int_0^duration expm(A_f' s) Q expm(A_f s) ds``."""
    k = A_f.shape[0]
    block = np.zeros((2 * k, 2 * k))
    block[:k, :k] = -A_f.T
    block[:k, k:] = Q
    block[k:, k:] = A_f
    F = expm(block * duration)
    return F[k:, k:].T @ F[:k, k:]


def sample_hold(params: SampleHoldParams | None = None, **overrides) -> Bundle:
    p = params or SampleHoldParams()
    if overrides:
        p = SampleHoldParams(**{**p.__dict__, **overrides})
    d = design(p)
    n, m, T_s, sigma = p.n_z, p.m_z, p.T_s, p.sigma
    A, B, A_f, P, Q_C, K, u_max = p.A, p.B, d.A_f, d.P, d.Q_C, d.K, d.u_max
    dim = n + m + 1

    def in_box(v, tol):
        return bool(np.all(np.abs(v) <= u_max + tol))

    def box_excess(v):
        return float(np.max(np.abs(v)) - u_max) if v.size else -np.inf

    def flow_map(x, u):
        z, eta = x[:n], x[n : n + m]
        return np.concatenate([A @ z + B @ eta, np.zeros(m), [1.0]])

    def jump_map(x, u):
        return np.concatenate([x[:n], u[:m], [0.0]])

    def flow_set(x, u, tol):
        return -tol <= x[-1] <= T_s + tol and in_box(x[n : n + m], tol)

    def jump_set(x, u, tol):
        return abs(x[-1] - T_s) <= tol and in_box(x[n : n + m], tol) and in_box(u, tol)

    def flow_guard(x, u):
        return max(-x[-1], x[-1] - T_s, box_excess(x[n : n + m]))

    def jump_guard(x, u):
        return max(T_s - x[-1], box_excess(x[n : n + m]), box_excess(u))

    def closed_form(x, u, t):
        x1 = expm(A_f * t) @ x[: n + m]
        return np.concatenate([x1, [x[-1] + t]])

    plant = HybridPlant(
        state_dim=dim,
        input_dim=m,
        flow_map=flow_map,
        jump_map=jump_map,
        flow_guard=flow_guard,
        jump_guard=jump_guard,
        flow_set=flow_set,
        jump_set=jump_set,
        flow_closed_form=closed_form,
        time_to_event=lambda x, u: max(T_s - x[-1], 0.0),
        state_triggered=True,
        flow_uses_input=False,
        default_flow_input=np.zeros(m),
        input_bounds=(-u_max * np.ones(m), u_max * np.ones(m)),
        name="sample-hold",
    )

    def M(tau):
        E = expm(A_f * (T_s - tau))
        return E.T @ P @ E

    def terminal_cost(x):
        x1 = x[: n + m]
        return float(np.exp(-sigma * x[-1]) * x1 @ M(x[-1]) @ x1)

    def flow_cost(x, u):
        x1 = x[: n + m]
        return float(x1 @ Q_C @ x1)

    def flow_cost_integral(arc, ta, tb):
        x1 = arc.state(ta)[: n + m]
        return float(x1 @ van_loan_gram(A_f, Q_C, tb - ta) @ x1)

    def terminal_guard(x):
        return max(terminal_cost(x) / p.c - 1.0, -x[-1], x[-1] - T_s)

    cost = CostSpec(
        flow_cost=flow_cost,
        jump_cost=lambda x, u: 0.0,
        terminal_cost=terminal_cost,
        terminal_set=lambda x, tol: -tol <= x[-1] <= T_s + tol and terminal_cost(x) <= p.c * (1 + tol),
        terminal_guard=terminal_guard,
        flow_cost_integral=flow_cost_integral,
    )

    def distance(x):
        x = np.asarray(x, float)
        tau_gap = max(-x[-1], x[-1] - T_s, 0.0)
        return float(np.sqrt(np.sum(x[: n + m] ** 2) + tau_gap**2))

    target = TargetSet(
        contains=lambda x: distance(x) <= 1e-12,
        distance=distance,
        name="origin with any timer value",
    )

    feedback = Feedback(
        kappa_C=lambda x: np.zeros(m),
        kappa_D=lambda x: np.clip(K @ x[:n], -u_max, u_max),
    )

    held = min(u_max, 50.0)
    lo = np.concatenate([-2 * np.ones(n), -held * np.ones(m), [0.0]])
    hi = np.concatenate([2 * np.ones(n), held * np.ones(m), [T_s]])
    jump_lo = lo.copy()
    jump_lo[-1] = T_s
    return Bundle(
        name="sample-hold",
        plant=plant,
        cost=cost,
        feedback=feedback,
        target=target,
        horizon=make_generic(p.N, T_s),
        params=p,
        closed_loop_guard=lambda x: T_s - x[-1],
        derived={"V": terminal_cost},
        state_names=tuple(f"z{i}" for i in range(n)) + tuple(f"eta{i}" for i in range(m)) + ("tau",),
        input_names=tuple(f"u{i}" for i in range(m)),
        sampling_box=(lo, hi),
        jump_sampling_box=(jump_lo, hi),
        growth_candidate=(terminal_cost, -sigma),
        design=d,
    )
