"""Hybrid time instants and compact hybrid time domains.

A compact hybrid time domain is stored as its sequence of generalized jump
times ``0 = t_0 <= t_1 <= ... <= t_{J+1}``; level ``j`` is the interval
``[t_j, t_{j+1}] x {j}``.  Degenerate levels (``t_j == t_{j+1}``) model
consecutive jumps without flow in between.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Absolute tolerance on ordinary time used by every comparison in the package.
TIME_TOL = 1e-12


class DomainError(ValueError):
    """A hybrid time does not belong to the domain it is used with."""


@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int

    def __post_init__(self):
        if self.t < -TIME_TOL or self.j < 0:
            raise ValueError(f"hybrid time must be nonnegative, got ({self.t}, {self.j})")
        object.__setattr__(self, "t", max(float(self.t), 0.0))
        object.__setattr__(self, "j", int(self.j))

    @property
    def length(self) -> float:
        """Elapsed hybrid time ``t + j``."""
        return self.t + self.j

    def __add__(self, other: "HybridTime") -> "HybridTime":
        return HybridTime(self.t + other.t, self.j + other.j)

    def __sub__(self, other: "HybridTime") -> "HybridTime":
        return HybridTime(self.t - other.t, self.j - other.j)

    def __lt__(self, other: "HybridTime") -> bool:
        return (self.length, self.j) < (other.length, other.j)

    def __le__(self, other: "HybridTime") -> bool:
        return self == other or self < other

    def dominated_by(self, other: "HybridTime") -> bool:
        """Component-wise order ``t <= t'`` and ``j <= j'``."""
        return self.t <= other.t + TIME_TOL and self.j <= other.j

    def close_to(self, other: "HybridTime", tol: float = TIME_TOL) -> bool:
        return self.j == other.j and abs(self.t - other.t) <= tol

    def __iter__(self):
        yield self.t
        yield self.j


@dataclass(frozen=True)
class HybridTimeDomain:
    """Compact hybrid time domain given by its generalized jump times."""

    jump_times: tuple[float, ...]

    def __init__(self, jump_times: Sequence[float]):
        times = tuple(float(s) for s in jump_times)
        if len(times) < 2:
            raise ValueError("a compact hybrid time domain needs at least t_0 and t_1")
        if abs(times[0]) > TIME_TOL:
            raise ValueError(f"t_0 must be 0, got {times[0]}")
        if any(b < a - TIME_TOL for a, b in zip(times, times[1:])):
            raise ValueError(f"jump times must be nondecreasing: {times}")
        # Snap tiny decreases to keep the sequence exactly monotone.
        fixed = [0.0]
        for s in times[1:]:
            fixed.append(max(s, fixed[-1]))
        object.__setattr__(self, "jump_times", tuple(fixed))

    @classmethod
    def flow(cls, duration: float) -> "HybridTimeDomain":
        return cls((0.0, duration))

    @property
    def J(self) -> int:
        return len(self.jump_times) - 2

    @property
    def terminal(self) -> HybridTime:
        return HybridTime(self.jump_times[-1], self.J)

    def interval(self, j: int) -> tuple[float, float]:
        """Ordinary-time interval of level ``j``."""
        if not 0 <= j <= self.J:
            raise DomainError(f"level {j} outside domain with J={self.J}")
        return self.jump_times[j], self.jump_times[j + 1]

    def __contains__(self, ht) -> bool:
        return contains(self, ht)

    def __len__(self) -> int:
        return self.J + 1


def _as_ht(ht) -> HybridTime:
    return ht if isinstance(ht, HybridTime) else HybridTime(*ht)


def contains(dom: HybridTimeDomain, ht, tol: float = TIME_TOL) -> bool:
    t, j = _as_ht(ht)
    if j > dom.J:
        return False
    lo, hi = dom.jump_times[j], dom.jump_times[j + 1]
    return lo - tol <= t <= hi + tol


def truncate(dom: HybridTimeDomain, ht) -> HybridTimeDomain:
    """Domain of the truncation up to ``ht`` (its generalized jump times)."""
    ht = _as_ht(ht)
    if not contains(dom, ht):
        raise DomainError(f"{ht} is not in the domain {dom.jump_times}")
    t = min(max(ht.t, dom.jump_times[ht.j]), dom.jump_times[ht.j + 1])
    return HybridTimeDomain(dom.jump_times[: ht.j + 1] + (t,))


def tail(dom: HybridTimeDomain, ht) -> HybridTimeDomain:
    """The part of ``dom`` after ``ht``, shifted so that it starts at (0, 0)."""
    ht = _as_ht(ht)
    if not contains(dom, ht):
        raise DomainError(f"{ht} is not in the domain {dom.jump_times}")
    t = min(max(ht.t, dom.jump_times[ht.j]), dom.jump_times[ht.j + 1])
    return HybridTimeDomain((0.0,) + tuple(s - t for s in dom.jump_times[ht.j + 1 :]))


def concatenate(prefix: HybridTimeDomain, suffix: HybridTimeDomain) -> HybridTimeDomain:
    """Append ``suffix`` at the terminal time of ``prefix``.

    The last level of the prefix and the first level of the suffix share the
    jump count, so their flow intervals fuse into one.
    """
    T = prefix.jump_times[-1]
    return HybridTimeDomain(prefix.jump_times[:-1] + tuple(T + s for s in suffix.jump_times[1:]))


def shift(ht, by) -> HybridTime:
    return _as_ht(ht) + _as_ht(by)


def nodes_in_order(dom: HybridTimeDomain) -> list[HybridTime]:
    """Endpoints of every level, ordered by ``t + j``."""
    out = []
    for j in range(dom.J + 1):
        lo, hi = dom.interval(j)
        out.append(HybridTime(lo, j))
        if hi > lo:
            out.append(HybridTime(hi, j))
    return out


def as_array(dom: HybridTimeDomain) -> np.ndarray:
    return np.asarray(dom.jump_times, dtype=float)
