import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmpc.horizon import (
    ControlHorizon,
    HorizonError,
    PredictionHorizon,
    domain_exceeds,
    make_band,
    make_generic,
    parse_control,
    parse_horizon,
    reached,
)
from hmpc.hybrid_time import HybridTime, HybridTimeDomain


def in_generic(N, delta, t, j):
    """Membership straight from max(T/delta, J) = N."""
    return math.isclose(max(t / delta, j), N, abs_tol=1e-12)


def test_generic_membership_examples():
    T = make_generic(5, 0.5)
    assert (2.5, 3) in T
    assert (1.0, 5) in T
    assert (1.0, 2) not in T


def test_generic_n1_cases():
    T = make_generic(1, 1.0)
    assert T.level(0) == (1.0, 1.0)
    assert T.level(1) == (0.0, 1.0)
    assert (0.5, 0) not in T and (1.0, 0) in T and (0.3, 1) in T


@pytest.mark.parametrize("N", range(1, 11))
@pytest.mark.parametrize("delta", [0.1, 0.25, 0.5, 1.0, 1.5, 2.0])
def test_generic_matches_defining_set(N, delta):
    T = make_generic(N, delta)
    assert T.thresholds[0] > 0 and T.thresholds[-1] == 0
    assert all(b <= a for a, b in zip(T.thresholds, T.thresholds[1:]))
    assert T.min_length() > 0
    for j in range(N + 2):
        for t in np.linspace(0, 1.2 * delta * N, 25):
            assert T.contains((t, j)) == (j <= N and in_generic(N, delta, t, j)), (t, j)


def test_direct_staircase():
    T = PredictionHorizon((2.0, 1.0, 0.0))
    assert T.level(0) == (1.0, 2.0) and T.level(1) == (0.0, 1.0)


def test_band_levels():
    T = make_band(1.5)
    assert T.level(0) == pytest.approx((1.5, 2.5))
    assert T.level(1) == pytest.approx((0.5, 1.5))
    assert T.level(2) == pytest.approx((0.0, 0.5))
    assert (0.0, 1) in make_band(0.5)
    assert (3.0, 0) not in make_band(1.0)


@pytest.mark.parametrize("mu", [0.2, 0.5, 1.0, 1.5, 2.7, 4.0])
def test_band_membership_matches_definition(mu):
    T = make_band(mu)
    for j in range(7):
        for t in np.linspace(0, mu + 2, 41):
            assert T.contains((t, j)) == (mu - 1e-12 <= t + j <= mu + 1 + 1e-12), (mu, t, j)


def test_invalid_horizons():
    for bad in [(0.0, 0.0), (1.0, 2.0, 0.0), (1.0, 0.5)]:
        with pytest.raises(HorizonError):
            PredictionHorizon(bad)
    with pytest.raises(HorizonError):
        make_generic(0, 1.0)
    with pytest.raises(HorizonError):
        make_band(-1.0)


def test_reached_examples():
    T = make_generic(2, 1.0)
    assert reached(T, HybridTimeDomain((0, 0.4, 0.4, 3))) == HybridTime(0.4, 2)
    assert reached(T, HybridTimeDomain((0, 0.1))) is None
    assert reached(T, HybridTimeDomain((0, 2.0))) == HybridTime(2.0, 0)


def test_parse_horizon_syntax():
    assert parse_horizon("generic(N=5, delta=0.5)") == make_generic(5, 0.5)
    assert parse_horizon("band(mu=1.5)").thresholds == make_band(1.5).thresholds
    assert parse_horizon("2,1,0").thresholds == (2.0, 1.0, 0.0)
    with pytest.raises(HorizonError):
        parse_horizon("generic(N=5)")


def test_control_horizon_bounds_and_triggers():
    ch = parse_control("fixed(Nc=2, delta=0.5)")
    assert ch == ControlHorizon(2, 0.5, "fixed-budget")
    with pytest.raises(HorizonError):
        ch.check_against(make_generic(1, 0.5), 1, 0.5)
    dom = HybridTimeDomain((0, 0.3, 2.0))
    assert ControlHorizon().trigger_time(dom) == HybridTime(0.3, 1)
    assert ControlHorizon().trigger_time(HybridTimeDomain((0, 2.5))) == HybridTime(2.5, 0)
    assert ControlHorizon(1, 0.5, "fixed-budget").trigger_time(dom) == HybridTime(0.3, 1)


@st.composite
def staircase(draw):
    J = draw(st.integers(0, 5))
    vals = sorted((draw(st.floats(0.0, 3.0)) for _ in range(J)), reverse=True)
    top = draw(st.floats(0.01, 3.0))
    th = [max(top, vals[0] if vals else 0.0)] + vals + [0.0]
    return PredictionHorizon(tuple(th))


@st.composite
def domain(draw):
    gaps = draw(st.lists(st.floats(0.0, 3.0), min_size=1, max_size=9))
    return HybridTimeDomain(np.concatenate([[0.0], np.cumsum(gaps)]))


@settings(max_examples=500, deadline=None)
@given(staircase(), domain())
def test_reached_returns_earliest_member(T, dom):
    hit = reached(T, dom)
    if hit is None:
        return
    assert T.contains(hit) and dom.jump_times[hit.j] - 1e-12 <= hit.t <= dom.jump_times[hit.j + 1] + 1e-12
    for j in range(hit.j):  # no member at an earlier level
        a, b = dom.interval(j)
        lo, hi = T.level(j) if j <= T.J else (math.inf, -math.inf)
        assert max(a, lo) > min(b, hi)


@settings(max_examples=300, deadline=None)
@given(staircase(), domain())
def test_long_domains_reach_the_horizon(T, dom):
    if domain_exceeds(T, dom):
        assert reached(T, dom) is not None
