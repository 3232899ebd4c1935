import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmpc.hybrid_time import (
    DomainError,
    HybridTime,
    HybridTimeDomain,
    concatenate,
    contains,
    nodes_in_order,
    tail,
    truncate,
)

D3 = HybridTimeDomain((0.0, 0.5, 1.0))


def test_contains_interior_of_first_interval():
    assert contains(D3, (0.25, 0))


def test_jump_instant_belongs_to_both_levels():
    assert contains(D3, (0.5, 0))
    assert contains(D3, (0.5, 1))


def test_point_past_jump_is_outside():
    assert not contains(D3, (0.75, 0))
    assert not contains(D3, (0.2, 2))


def test_truncate_cuts_last_interval():
    assert truncate(D3, (0.7, 1)).jump_times == (0.0, 0.5, 0.7)


def test_truncate_at_jump_leaves_degenerate_level():
    assert truncate(D3, (0.5, 1)).jump_times == (0.0, 0.5, 0.5)


def test_truncate_with_simultaneous_jumps():
    dom = HybridTimeDomain((0.0, 1.0, 1.0, 2.0))
    assert truncate(dom, (1.0, 1)).jump_times == (0.0, 1.0, 1.0)


def test_truncate_outside_raises():
    with pytest.raises(DomainError):
        truncate(D3, (0.75, 0))


def test_concatenate_merges_flow_levels():
    assert concatenate(HybridTimeDomain((0, 1)), HybridTimeDomain((0, 2))).jump_times == (0.0, 3.0)


def test_concatenate_shifts_by_prefix_terminal_time():
    out = concatenate(HybridTimeDomain((0, 1, 1)), HybridTimeDomain((0, 0.5)))
    assert out.jump_times == (0.0, 1.0, 1.5)
    assert out.J == 1


def test_concatenate_jump_only_domains():
    jump_only = HybridTimeDomain((0.0, 0.0, 0.0))
    out = concatenate(jump_only, jump_only)
    assert out.jump_times == (0.0, 0.0, 0.0, 0.0)
    assert out.terminal == HybridTime(0.0, 2)


def test_invalid_domains_rejected():
    with pytest.raises(ValueError):
        HybridTimeDomain((0.0, 1.0, 0.5))
    with pytest.raises(ValueError):
        HybridTimeDomain((0.1, 1.0))
    with pytest.raises(ValueError):
        HybridTime(-1.0, 0)


def test_order_by_elapsed_hybrid_time():
    assert HybridTime(0.5, 1) < HybridTime(2.0, 0)
    assert HybridTime(1.0, 0) < HybridTime(0.0, 1)  # equal length, fewer jumps first
    assert HybridTime(0.3, 1).dominated_by(HybridTime(0.4, 2))


def test_terminal_dominates_all_nodes():
    dom = HybridTimeDomain((0.0, 0.2, 0.2, 1.4))
    assert all(n <= dom.terminal for n in nodes_in_order(dom))


# ---------------------------------------------------------------------------
# Properties

gaps = st.lists(st.floats(0.0, 2.0, allow_nan=False), min_size=1, max_size=6)


def _dom(g):
    times = [0.0]
    for d in g:
        times.append(times[-1] + d)
    return HybridTimeDomain(times)


@st.composite
def domain_and_time(draw):
    dom = _dom(draw(gaps))
    j = draw(st.integers(0, dom.J))
    lo, hi = dom.interval(j)
    t = draw(st.floats(lo, hi)) if hi > lo else lo
    return dom, HybridTime(t, j)


@settings(max_examples=300, deadline=None)
@given(domain_and_time(), st.integers(0, 8), st.floats(0.0, 10.0))
def test_truncation_keeps_exactly_the_earlier_times(pair, j2, t2):
    dom, ht = pair
    cut = truncate(dom, ht)
    probe = HybridTime(t2, j2)
    expected = contains(dom, probe) and probe.j <= ht.j and (probe.j < ht.j or probe.t <= ht.t + 1e-12)
    assert contains(cut, probe) == expected
    if expected:
        assert probe.dominated_by(ht) and probe.length <= ht.length + 1e-12


@settings(max_examples=200, deadline=None)
@given(gaps, gaps, gaps)
def test_concatenation_is_associative(a, b, c):
    A, B, C = _dom(a), _dom(b), _dom(c)
    left = concatenate(concatenate(A, B), C).jump_times
    right = concatenate(A, concatenate(B, C)).jump_times
    assert left == pytest.approx(right, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(domain_and_time())
def test_truncate_then_concatenate_tail_restores(pair):
    dom, ht = pair
    back = concatenate(truncate(dom, ht), tail(dom, ht))
    assert back.jump_times == pytest.approx(dom.jump_times, abs=1e-12)
    assert back.J == dom.J
