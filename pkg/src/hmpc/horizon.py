"""Hybrid prediction horizons in staircase form and control horizons."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .hybrid_time import TIME_TOL, HybridTime, HybridTimeDomain


class HorizonError(ValueError):
    """Invalid horizon parameters or syntax."""


@dataclass(frozen=True)
class PredictionHorizon:
    """Set of admissible terminal hybrid times.

    Stored as thresholds ``t_0 >= t_1 >= ... >= t_{J+1} = 0`` with
    ``t_0 > 0``; level ``j`` admits terminal times ``[t_{j+1}, t_j] x {j}``.
    """

    thresholds: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        th = tuple(float(v) for v in self.thresholds)
        if len(th) < 2:
            raise HorizonError("a horizon needs at least t_0 and t_1")
        if not th[0] > 0:
            raise HorizonError(f"t_0 must be positive, got {th[0]}")
        if th[-1] != 0.0:
            raise HorizonError(f"the last threshold must be 0, got {th[-1]}")
        if any(b > a for a, b in zip(th, th[1:])):
            raise HorizonError(f"thresholds must be nonincreasing: {th}")
        object.__setattr__(self, "thresholds", th)

    @property
    def J(self) -> int:
        return len(self.thresholds) - 2

    def level(self, j: int) -> tuple[float, float]:
        """Admissible ordinary-time interval ``[lo, hi]`` at jump count ``j``."""
        if not 0 <= j <= self.J:
            raise HorizonError(f"level {j} outside horizon with J={self.J}")
        return self.thresholds[j + 1], self.thresholds[j]

    def levels(self):
        return [(j, *self.level(j)) for j in range(self.J + 1)]

    def contains(self, ht, tol: float = TIME_TOL) -> bool:
        t, j = ht
        if j > self.J or j < 0:
            return False
        lo, hi = self.level(j)
        return lo - tol <= t <= hi + tol

    __contains__ = contains

    def min_length(self) -> float:
        """``min (T + J)`` over the horizon; positive by construction."""
        return min(lo + j for j, lo, _ in self.levels())

    def describe(self) -> str:
        return self.label or "thresholds(" + ",".join(f"{v:g}" for v in self.thresholds) + ")"


def make_generic(N: int, delta: float) -> PredictionHorizon:
    """Horizon ``{(T, J) : max(T/delta, J) = N}``."""
    if int(N) != N or N < 1:
        raise HorizonError(f"N must be a positive integer, got {N}")
    if not delta > 0:
        raise HorizonError(f"delta must be positive, got {delta}")
    N = int(N)
    top = delta * N
    return PredictionHorizon((top,) * (N + 1) + (0.0,), label=f"generic(N={N},delta={delta:g})")


def make_band(mu: float) -> PredictionHorizon:
    """Horizon ``{(T, J) : T + J in [mu, mu + 1]}`` in staircase form."""
    if not mu > 0 or not math.isfinite(mu):
        raise HorizonError(f"mu must be positive and finite, got {mu}")
    top = int(math.floor(mu + 1))
    th = [mu + 1 - j for j in range(top + 1)]
    th[-1] = max(th[-1], 0.0)
    # For integer mu the point (0, mu + 1) is a member, so a degenerate last level is kept.
    th.append(0.0)
    return PredictionHorizon(tuple(th), label=f"band(mu={mu:g})")


def reached(T: PredictionHorizon, dom: HybridTimeDomain, tol: float = TIME_TOL) -> Optional[HybridTime]:
    """Earliest hybrid time of ``dom`` (in ``t + j`` order) that lies in ``T``."""
    times = dom.jump_times
    for j in range(min(dom.J, T.J) + 1):
        a, b = times[j], times[j + 1]
        lo, hi = T.level(j)
        start = max(a, lo)
        if start <= min(b, hi) + tol:
            # Earlier levels always have smaller t + j than later ones at equal or later t.
            return HybridTime(min(start, b), j)
    return None


def domain_exceeds(T: PredictionHorizon, dom: HybridTimeDomain) -> bool:
    """Sufficient condition for ``reached``: terminal ``t + j`` beyond ``t_0 + J``."""
    term = dom.terminal
    return term.length > T.thresholds[0] + T.J


_CALL = re.compile(r"^\s*(generic|band)\s*\((.*)\)\s*$", re.IGNORECASE)


def parse_horizon(text: str) -> PredictionHorizon:
    """Parse ``generic(N=5,delta=0.5)``, ``band(mu=1.5)`` or a threshold list."""
    m = _CALL.match(text)
    if m:
        kind = m.group(1).lower()
        args = {}
        for part in filter(None, (p.strip() for p in m.group(2).split(","))):
            if "=" not in part:
                raise HorizonError(f"expected key=value in {text!r}")
            k, v = (s.strip() for s in part.split("=", 1))
            args[k.lower()] = v
        try:
            if kind == "generic":
                return make_generic(int(args.pop("n")), float(args.pop("delta")))
            return make_band(float(args.pop("mu")))
        except KeyError as e:
            raise HorizonError(f"missing parameter {e} in {text!r}") from None
        except ValueError as e:
            raise HorizonError(str(e)) from None
    body = text.strip().strip("[]()")
    try:
        values = [float(s) for s in body.split(",") if s.strip()]
    except ValueError:
        raise HorizonError(f"cannot parse horizon {text!r}") from None
    return PredictionHorizon(tuple(values))


TRIGGERS = ("next-jump-or-terminal", "fixed-budget")


@dataclass(frozen=True)
class ControlHorizon:
    """When to re-optimize along the applied optimal input.

    ``fixed-budget`` re-optimizes at the first hybrid time where
    ``max((t - T_i)/delta_c, j - J_i)`` reaches ``N_c`` (or at the end of the
    predicted pair if that comes first).  ``next-jump-or-terminal``
    re-optimizes right after the first predicted jump, or at the terminal
    time when the prediction has no jump.
    """

    N_c: int = 1
    delta_c: float = 1.0
    trigger: str = "next-jump-or-terminal"

    def __post_init__(self):
        if int(self.N_c) != self.N_c or self.N_c < 1:
            raise HorizonError(f"N_c must be a positive integer, got {self.N_c}")
        if not self.delta_c > 0:
            raise HorizonError(f"delta_c must be positive, got {self.delta_c}")
        if self.trigger not in TRIGGERS:
            raise HorizonError(f"trigger must be one of {TRIGGERS}, got {self.trigger!r}")

    def check_against(self, T: PredictionHorizon, N: Optional[int] = None, delta: Optional[float] = None):
        """Bounds ``N_c <= N`` and ``delta_c <= delta`` for generic horizons."""
        if N is not None and self.N_c > N:
            raise HorizonError(f"N_c={self.N_c} exceeds N={N}")
        if delta is not None and self.delta_c > delta + TIME_TOL:
            raise HorizonError(f"delta_c={self.delta_c} exceeds delta={delta}")

    def trigger_time(self, dom: HybridTimeDomain) -> HybridTime:
        """Hybrid time in ``dom`` (relative to its start) of the next re-optimization."""
        if self.trigger == "next-jump-or-terminal":
            if dom.J >= 1:
                return HybridTime(dom.jump_times[1], 1)
            return dom.terminal
        hit = reached(make_generic(self.N_c, self.delta_c), dom)
        return hit if hit is not None else dom.terminal


def parse_control(text: str) -> ControlHorizon:
    """Parse ``next-jump``, ``terminal``-style names or ``fixed(Nc=1,delta=0.5)``."""
    s = text.strip().lower()
    if s in ("next-jump", "next-jump-or-terminal", "default", ""):
        return ControlHorizon()
    m = re.match(r"^(fixed|fixed-budget)\s*\((.*)\)$", s)
    if not m:
        raise HorizonError(f"cannot parse control horizon {text!r}")
    args = dict(p.split("=", 1) for p in m.group(2).replace(" ", "").split(",") if p)
    try:
        return ControlHorizon(int(args["nc"]), float(args["delta"]), "fixed-budget")
    except (KeyError, ValueError) as e:
        raise HorizonError(f"cannot parse control horizon {text!r}: {e}") from None


def staircase(values: Sequence[float]) -> PredictionHorizon:
    return PredictionHorizon(tuple(values))
