"""Sampled falsification checks for stage-cost bounds, terminal bounds, CLF inequalities and distance conditions.

Nothing here proves anything: each report lists the violations found among
the samples drawn, and says "no violation found among N samples" otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .costs import CostSpec, TargetSet
from .plant import Feedback, HybridPlant, SolutionPair

RESTRICTIONS = ("any", "C", "D", "X", "C_kappa", "D_kappa")


# ---------------------------------------------------------------------------
# Samples and witnesses


@dataclass(frozen=True)
class SampleCloud:
    """Seeded uniform samples in a box, filtered by a membership predicate.

    A dimension with ``lo == hi`` is held fixed, which is how thin sets such
    as a jump surface are sampled.  ``discrete`` maps a dimension to the
    values it may take.  ``input_lo``/``input_hi`` add a uniformly drawn input
    to each sample.
    """

    seed: int
    count: int
    lo: tuple
    hi: tuple
    restriction: str = "any"
    input_lo: Optional[tuple] = None
    input_hi: Optional[tuple] = None
    discrete: Mapping[int, tuple] = field(default_factory=dict)
    max_draw_factor: int = 200

    def __post_init__(self):
        lo = tuple(float(v) for v in np.ravel(self.lo))
        hi = tuple(float(v) for v in np.ravel(self.hi))
        if len(lo) != len(hi) or any(b < a for a, b in zip(lo, hi)):
            raise ValueError("region bounds must have equal length with lo <= hi")
        if self.count < 1:
            raise ValueError("count must be positive")
        if self.restriction not in RESTRICTIONS:
            raise ValueError(f"restriction must be one of {RESTRICTIONS}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.input_lo is not None:
            object.__setattr__(self, "input_lo", tuple(float(v) for v in np.ravel(self.input_lo)))
            object.__setattr__(self, "input_hi", tuple(float(v) for v in np.ravel(self.input_hi)))

    def with_restriction(self, restriction: str, **changes) -> "SampleCloud":
        kw = {**self.__dict__, "restriction": restriction, **changes}
        return SampleCloud(**kw)

    def draw(self, accept: Callable[[np.ndarray, Optional[np.ndarray]], bool]):
        """Return ``(states, inputs)`` arrays of ``count`` accepted samples.

        Raises ``ValueError`` when too few candidates pass ``accept``.
        """
        rng = np.random.default_rng(self.seed)
        lo, hi = np.array(self.lo), np.array(self.hi)
        has_u = self.input_lo is not None
        ulo = np.array(self.input_lo) if has_u else None
        uhi = np.array(self.input_hi) if has_u else None
        xs, us = [], []
        drawn = 0
        limit = self.max_draw_factor * self.count
        while len(xs) < self.count and drawn < limit:
            batch = min(max(self.count, 256), limit - drawn)
            X = lo + (hi - lo) * rng.random((batch, lo.size))
            for dim, values in self.discrete.items():
                X[:, dim] = rng.choice(np.asarray(values, float), size=batch)
            U = ulo + (uhi - ulo) * rng.random((batch, ulo.size)) if has_u else [None] * batch
            drawn += batch
            for x, u in zip(X, U):
                if accept(x, u):
                    xs.append(x)
                    us.append(u)
                    if len(xs) == self.count:
                        break
        if len(xs) < self.count:
            raise ValueError(
                f"rejection sampling for {self.restriction} accepted {len(xs)} of {self.count} "
                f"after {drawn} draws; narrow the region"
            )
        return np.array(xs), (np.array(us) if has_u else None)


def restriction_predicate(
    restriction: str,
    plant: Optional[HybridPlant] = None,
    spec: Optional[CostSpec] = None,
    fb: Optional[Feedback] = None,
    tol: float = 1e-9,
):
    """Membership predicate ``(x, u) -> bool`` for a named restriction."""
    if restriction == "any":
        return lambda x, u: True
    if restriction == "C":
        return lambda x, u: plant.in_C(x, u, tol)
    if restriction == "D":
        return lambda x, u: plant.in_D(x, u, tol)
    if restriction == "X":
        return lambda x, u: spec.in_X(x, tol)
    if restriction == "C_kappa":
        return lambda x, u: plant.in_C(x, fb.flow(x), tol)
    if restriction == "D_kappa":
        return lambda x, u: plant.in_D(x, fb.jump(x), tol)
    raise ValueError(f"unknown restriction {restriction!r}")


@dataclass(frozen=True)
class PowerWitness:
    """Comparison function ``r -> a * r**p``."""

    a: float
    p: float = 1.0

    def __call__(self, r: float) -> float:
        return self.a * r**self.p if r > 0 else 0.0

    def __str__(self):
        return f"{self.a:g}*r^{self.p:g}"


def is_class_k(fn: Callable[[float], float], r_max: float = 10.0, points: int = 1001) -> bool:
    """Zero at zero and strictly increasing on a grid over ``[0, r_max]``."""
    r = np.linspace(0.0, r_max, points)
    vals = np.array([fn(v) for v in r])
    return bool(vals[0] == 0 and np.all(np.diff(vals) > 0))


@dataclass
class Violation:
    inequality: str
    point: tuple
    lhs: float
    rhs: float


@dataclass
class CheckReport:
    check: str
    samples: dict = field(default_factory=dict)  # inequality -> sample count
    violations: list[Violation] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    holds: dict = field(default_factory=dict)  # for solution-dependent conditions

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, inequality: Optional[str] = None) -> int:
        return sum(1 for v in self.violations if inequality is None or v.inequality == inequality)

    def summary(self) -> str:
        lines = [f"[{self.check}]"]
        for name, n in self.samples.items():
            k = self.count(name)
            if k:
                lines.append(f"  {name}: {k} violation(s) among {n} samples")
            else:
                lines.append(f"  {name}: no violation found among {n} samples")
        for name, val in self.holds.items():
            lines.append(f"  {name}: {val}")
        lines += [f"  note: {n}" for n in self.notes]
        for v in self.violations[:10]:
            lines.append(f"  {v.inequality} at {np.round(v.point, 6).tolist()}: lhs={v.lhs:.6g} rhs={v.rhs:.6g}")
        if len(self.violations) > 10:
            lines.append(f"  ... {len(self.violations) - 10} more")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "ok": self.ok,
            "samples": self.samples,
            "violations": len(self.violations),
            "holds": self.holds,
            "notes": self.notes,
        }


def fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """Central finite-difference gradient."""
    x = np.asarray(x, float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return grad


# ---------------------------------------------------------------------------
# Checks


def check_stage_bounds(
    plant: HybridPlant,
    spec: CostSpec,
    target: TargetSet,
    witness_C: Callable[[float], float],
    witness_D: Callable[[float], float],
    cloud: SampleCloud,
    cloud_D: Optional[SampleCloud] = None,
    tol: float = 1e-12,
) -> CheckReport:
    """``L_C >= witness_C(|x|_A)`` on C-samples and ``L_D >= witness_D(|x|_A)`` on D-samples."""
    rep = CheckReport("stage")
    xs, us = cloud.with_restriction("C").draw(restriction_predicate("C", plant))
    for x, u in zip(xs, us):
        lhs, rhs = spec.L_C(x, u), witness_C(target(x))
        if lhs < rhs - tol:
            rep.violations.append(Violation("L_C lower bound", tuple(x), lhs, rhs))
    rep.samples["L_C lower bound"] = len(xs)
    cd = (cloud_D or cloud).with_restriction("D")
    xs, us = cd.draw(restriction_predicate("D", plant))
    for x, u in zip(xs, us):
        lhs, rhs = spec.L_D(x, u), witness_D(target(x))
        if lhs < rhs - tol:
            rep.violations.append(Violation("L_D lower bound", tuple(x), lhs, rhs))
    rep.samples["L_D lower bound"] = len(xs)
    return rep


def check_terminal_bound(
    spec: CostSpec,
    target: TargetSet,
    witness: Callable[[float], float],
    epsilon: float,
    cloud: SampleCloud,
    tol: float = 1e-12,
) -> CheckReport:
    """``V(x) <= witness(|x|_A)`` on X-samples within ``epsilon`` of the target."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rep = CheckReport("terminal")
    xs, _ = cloud.with_restriction("X").draw(lambda x, u: spec.in_X(x) and target(x) <= epsilon)
    for x in xs:
        lhs, rhs = spec.V(x), witness(target(x))
        if lhs > rhs + tol:
            rep.violations.append(Violation("V upper bound", tuple(x), lhs, rhs))
    rep.samples["V upper bound"] = len(xs)
    return rep


def fit_terminal_gain(spec: CostSpec, target: TargetSet, epsilon: float, cloud: SampleCloud) -> float:
    """Smallest ``k`` with ``V(x) <= k |x|_A`` on the cloud (for a linear witness)."""
    xs, _ = cloud.with_restriction("X").draw(lambda x, u: spec.in_X(x) and target(x) <= epsilon)
    ratios = [spec.V(x) / target(x) for x in xs if target(x) > 0]
    return max(ratios, default=0.0)


def check_clf(
    plant: HybridPlant,
    spec: CostSpec,
    fb: Feedback,
    cloud: SampleCloud,
    fd_step: float = 1e-5,
    *,
    cloud_D: Optional[SampleCloud] = None,
    jump_tol: float = 1e-9,
) -> CheckReport:
    """Flow and jump decrease of ``V`` under the feedback, by at least the stage cost.

    Flow: ``<grad V, f(x, kC(x))> <= -L_C(x, kC(x))`` on X ∩ C_kappa samples,
    with a central-difference gradient and tolerance ``1e-6 + 10 fd_step**2``.
    Jump: ``V(g(x, kD(x))) - V(x) <= -L_D(x, kD(x))`` on X ∩ D_kappa samples.
    """
    rep = CheckReport("clf")
    flow_tol = 1e-6 + 10 * fd_step**2
    in_C = restriction_predicate("C_kappa", plant, spec, fb)
    xs, _ = cloud.with_restriction("C_kappa").draw(lambda x, u: spec.in_X(x) and in_C(x, u))
    worst = math.inf
    for x in xs:
        u = fb.flow(x)
        lhs = float(fd_gradient(spec.V, x, fd_step) @ plant.f(x, u))
        rhs = -spec.L_C(x, u)
        worst = min(worst, rhs - lhs)
        if lhs > rhs + flow_tol:
            rep.violations.append(Violation("flow decrease", tuple(x), lhs, rhs))
    rep.samples["flow decrease"] = len(xs)
    rep.notes.append(f"smallest flow margin {worst:.3g} (tolerance {flow_tol:.3g})")

    in_D = restriction_predicate("D_kappa", plant, spec, fb)
    cd = (cloud_D or cloud).with_restriction("D_kappa")
    xs, _ = cd.draw(lambda x, u: spec.in_X(x) and in_D(x, u))
    worst = math.inf
    for x in xs:
        v = fb.jump(x)
        lhs = spec.V(plant.g(x, v)) - spec.V(x)
        rhs = -spec.L_D(x, v)
        worst = min(worst, rhs - lhs)
        if lhs > rhs + jump_tol:
            rep.violations.append(Violation("jump decrease", tuple(x), lhs, rhs))
    rep.samples["jump decrease"] = len(xs)
    rep.notes.append(f"smallest jump margin {worst:.3g} (tolerance {jump_tol:.3g})")
    return rep


def _distance_profile(sol: SolutionPair, target: TargetSet):
    """Nodes in hybrid-time order as rows ``(t, j, distance)``."""
    rows = []
    for j, a in enumerate(sol.arcs):
        for t, x in zip(a.t, a.x):
            rows.append((float(t), j, target(x)))
    return rows


def _longest_window(rows, level: float, use_jumps: bool) -> float:
    """Longest stretch (in ``t + j`` or in ``t``) over which the distance stays at or above ``level``."""
    best, start = -math.inf, None
    for t, j, d in rows:
        if d >= level:
            if start is None:
                start = (t, j)
            length = (t - start[0]) + ((j - start[1]) if use_jumps else 0)
            best = max(best, length)
        else:
            start = None
    return best


def check_pd_conditions(
    plant: HybridPlant,
    target: TargetSet,
    sols: Sequence[SolutionPair],
    alpha: Callable[[float], float],
    *,
    sigma: Optional[Callable[[float], float]] = None,
    cloud: Optional[SampleCloud] = None,
    epsilon: float = 1.0,
    tol: float = 1e-12,
) -> CheckReport:
    """Which of P1-P4 each solution satisfies for ``alpha``, scanning its stored nodes.

    P1: a window of hybrid length ``>= a`` with distance ``>= a`` throughout;
    P2: the same with ordinary-time length; P3: distance ``>= a`` at some
    pre-jump node; P4: distance ``>= a`` at the terminal node; here
    ``a = alpha(|x(0,0)|_A)``.  With ``sigma`` and ``cloud``, P5 checks
    ``|f(x,u)| <= sigma(|x|_A)`` on C-samples within ``epsilon`` of the target.
    """
    rep = CheckReport("pd")
    for i, sol in enumerate(sols):
        if not sol.arcs:
            raise ValueError("empty solution")
        a = alpha(target(sol.initial_state)) - tol
        rows = _distance_profile(sol, target)
        res = {
            "P1": _longest_window(rows, a, True) >= a,
            "P2": _longest_window(rows, a, False) >= a,
            "P3": any(target(x) >= a for x in sol.pre_jump_states()),
            "P4": target(sol.terminal_state) >= a,
        }
        rep.holds[f"solution {i}"] = res
    if sigma is not None:
        if cloud is None:
            raise ValueError("P5 needs a sample cloud")
        xs, us = cloud.with_restriction("C").draw(lambda x, u: plant.in_C(x, u) and target(x) <= epsilon)
        for x, u in zip(xs, us):
            lhs, rhs = float(np.linalg.norm(plant.f(x, u))), sigma(target(x))
            if lhs > rhs + tol:
                rep.violations.append(Violation("P5 velocity bound", tuple(x), lhs, rhs))
        rep.samples["P5 velocity bound"] = len(xs)
    rep.notes.append("P1-P4 are evaluated at stored solution nodes only")
    return rep


def check_prop5(
    plant: HybridPlant,
    target: TargetSet,
    vtilde: Optional[Callable[[np.ndarray], float]],
    lam: float,
    epsilon: float,
    sigma: Optional[Callable[[float], float]],
    cloud: SampleCloud,
    *,
    alpha1: Optional[Callable[[float], float]] = None,
    alpha2: Optional[Callable[[float], float]] = None,
    alpha_D: Optional[Callable[[float], float]] = None,
    cloud_D: Optional[SampleCloud] = None,
    fd_step: float = 1e-5,
    tol: float = 1e-12,
) -> CheckReport:
    """Sufficient conditions for the distance properties, sampled.

    sandwich: ``alpha1(|x|_A) <= vtilde(x) <= alpha2(|x|_A)`` near the target;
    flow growth: ``<grad vtilde, f(x,u)> >= lam vtilde(x)`` on C near the target,
    with tolerance ``(1e-6 + 10 fd_step**2)(1 + |lam vtilde(x)|)``;
    velocity: ``|f(x,u)| <= sigma(|x|_A)`` on C with ``0 < |x|_A <= epsilon``;
    jump distance: ``|g(x,u)|_A >= alpha_D(|x|_A)`` on D.
    Conditions whose data is ``None`` are skipped.
    """
    rep = CheckReport("prop5")
    near = lambda x, u: plant.in_C(x, u) and target(x) <= epsilon
    flow_tol = 1e-6 + 10 * fd_step**2
    if vtilde is not None:
        xs, us = cloud.with_restriction("C").draw(near)
        if alpha1 is not None or alpha2 is not None:
            for x in xs:
                r, v = target(x), vtilde(x)
                if alpha1 is not None and v < alpha1(r) - tol:
                    rep.violations.append(Violation("sandwich lower", tuple(x), v, alpha1(r)))
                if alpha2 is not None and v > alpha2(r) + tol:
                    rep.violations.append(Violation("sandwich upper", tuple(x), v, alpha2(r)))
            rep.samples["sandwich lower"] = rep.samples["sandwich upper"] = len(xs)
        for x, u in zip(xs, us):
            lhs = float(fd_gradient(vtilde, x, fd_step) @ plant.f(x, u))
            rhs = lam * vtilde(x)
            # Scaled: vtilde can be large enough that FD round-off exceeds an absolute tolerance.
            if lhs < rhs - flow_tol * (1.0 + abs(rhs)):
                rep.violations.append(Violation("flow growth", tuple(x), lhs, rhs))
        rep.samples["flow growth"] = len(xs)
    if sigma is not None:
        xs, us = cloud.with_restriction("C").draw(lambda x, u: near(x, u) and target(x) > 0)
        for x, u in zip(xs, us):
            lhs, rhs = float(np.linalg.norm(plant.f(x, u))), sigma(target(x))
            if lhs > rhs + tol:
                rep.violations.append(Violation("velocity", tuple(x), lhs, rhs))
        rep.samples["velocity"] = len(xs)
    if alpha_D is not None:
        cd = (cloud_D or cloud).with_restriction("D")
        xs, us = cd.draw(lambda x, u: plant.in_D(x, u))
        for x, u in zip(xs, us):
            lhs, rhs = target(plant.g(x, u)), alpha_D(target(x))
            if lhs < rhs - 1e-9:
                rep.violations.append(Violation("jump distance", tuple(x), lhs, rhs))
        rep.samples["jump distance"] = len(xs)
    return rep
