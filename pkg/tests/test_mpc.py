import dataclasses
import math

import numpy as np
import pytest

from hmpc.horizon import ControlHorizon, make_generic
from hmpc.hybrid_time import HybridTime
from hmpc.mpc import DescentError, MpcConfig, MpcInfeasibleStart, assert_descent, run
from hmpc.ocp import BruteGrid, OcpOptions, brute_force_value
from hmpc.simulator import SimBudget
from hmpc.verify import SampleCloud

from oracles import C_STAR, V_STAR, energy


def config(bundle, control=ControlHorizon(), **kw):
    kw.setdefault("ocp", OcpOptions(feedback=bundle.feedback, feedback_guard=bundle.closed_loop_guard))
    return MpcConfig(
        horizon=make_generic(2, 0.5),
        cost=bundle.cost,
        control=control,
        budget=SimBudget(t_max=2.5, j_max=8),
        **kw,
    )


@pytest.fixture(scope="module")
def trace(ball):
    return run(ball.plant, config(ball), np.array([1.0, -1.0]))


def test_trace_starts_at_zero_and_moves_forward(trace):
    times = trace.optimization_times
    assert times[0] == HybridTime(0.0, 0)
    assert all(a < b for a, b in zip(times, times[1:]))
    assert trace.termination in ("t_max", "j_max")


def test_closed_loop_replays_each_prediction(trace):
    """Between optimization times the closed loop is the stored prediction, shifted."""
    for step in trace.steps:
        T0, J0 = step.time.t, step.time.j
        pred = step.prediction
        end = step.applied_until
        for j in range(end.j + 1):
            arc = pred.arcs[j]
            for t, x in zip(arc.t, arc.x):
                if j == end.j and t > end.t + 1e-12:
                    break
                assert np.allclose(trace.sol.x(T0 + t, J0 + j), x, atol=1e-9)


def test_each_step_starts_from_the_previous_end(trace):
    for prev, nxt in zip(trace.steps, trace.steps[1:]):
        assert nxt.time.t == pytest.approx(prev.time.t + prev.applied_until.t, abs=1e-12)
        assert nxt.time.j == prev.time.j + prev.applied_until.j


def test_next_jump_trigger(trace):
    """Up to and including the first predicted jump, else the whole prediction."""
    for s in trace.steps[:-1]:
        pred = s.prediction
        expected = HybridTime(pred.dom.jump_times[1], 1) if pred.J else pred.terminal_time
        assert s.applied_until.close_to(expected, 1e-12) and s.applied_until.j == expected.j


def test_energy_settles_at_target(trace):
    assert energy(trace.sol.terminal_state) == pytest.approx(C_STAR, abs=1e-4)


def test_descent_and_its_tolerance(trace):
    assert assert_descent(trace).ok
    assert assert_descent(trace, math.inf).ok
    assert assert_descent(trace).checked == len(trace.steps) - 1


def test_descent_violation_is_reported(trace):
    values = [s.value for s in trace.steps]
    try:
        trace.steps[1].value = trace.steps[0].value + 1.0
        rep = assert_descent(trace, 0.0)
        assert not rep.ok and rep.violations[0][0] == 0
        assert "descent fails" in rep.summary()
    finally:
        for s, v in zip(trace.steps, values):
            s.value = v


def test_on_target_every_value_is_zero(ball):
    tr = run(ball.plant, config(ball, assert_level="feasibility+descent"), np.array([0.0, -V_STAR]))
    assert max(tr.values) <= 1e-10
    assert all(abs(energy(x) - C_STAR) <= 1e-9 for a in tr.sol.arcs for x in a.x)


def test_fixed_budget_trigger(ball):
    cfg = config(ball, ControlHorizon(1, 0.25, "fixed-budget"))
    tr = run(ball.plant, cfg, np.array([1.0, 1.0]))
    for s in tr.steps[:-1]:
        end = s.applied_until
        assert math.isclose(max(end.t / 0.25, end.j), 1.0, abs_tol=1e-9)


def test_infeasible_start_raises(ball):
    with pytest.raises(MpcInfeasibleStart):
        run(ball.plant, config(ball, ocp=OcpOptions(seeds=1, penalty_rounds=1)), np.array([-1.0, 0.0]))


def test_config_validation(ball):
    with pytest.raises(ValueError):
        config(ball, assert_level="loud")
    assert issubclass(DescentError, RuntimeError)


def long_config(bundle):
    return MpcConfig(
        horizon=make_generic(2, 0.5),
        cost=bundle.cost,
        budget=SimBudget(t_max=10.0, j_max=30),
        ocp=OcpOptions(feedback=bundle.feedback, feedback_guard=bundle.closed_loop_guard),
    )


def max_distance(bundle, sol):
    return max(bundle.target(x) for a in sol.arcs for x in a.x)


def test_descent_from_excess_energy_against_the_oracle(ball):
    """Values strictly decrease until the target, each matching the grid oracle from its state."""
    cfg = dataclasses.replace(config(ball), budget=SimBudget(t_max=4.0, j_max=8))
    tr = run(ball.plant, cfg, np.array([3.0, 4.0]))
    values = tr.values
    first_zero = next(i for i, v in enumerate(values) if v <= 1e-8)
    assert all(b < a for a, b in zip(values[: first_zero + 1], values[1 : first_zero + 1]))
    grid = BruteGrid(np.linspace(0.0, 20.0, 81), max_jumps=2)
    for s in tr.steps[:first_zero]:
        assert s.value <= brute_force_value(ball.plant, ball.cost, make_generic(2, 0.5), s.state, grid) + 1e-4


@pytest.mark.slow
def test_stability_envelope_surrogate(ball):
    """Finite surrogate for stability: 20 starts with |x0|_A <= 0.5 stay within 3|x0|_A + 0.05."""
    cloud = SampleCloud(55, 20, *ball.sampling_box)
    starts, _ = cloud.draw(lambda x, u: ball.cost.in_X(x) and ball.target(x) <= 0.5)
    cfg = MpcConfig(horizon=make_generic(2, 0.5), cost=ball.cost, budget=SimBudget(t_max=2.0, j_max=6),
                    ocp=OcpOptions(feedback=ball.feedback, feedback_guard=ball.closed_loop_guard))
    for x0 in starts:
        tr = run(ball.plant, cfg, x0)
        assert max_distance(ball, tr.sol) <= 3 * ball.target(x0) + 0.05, x0


@pytest.mark.slow
@pytest.mark.parametrize("x0", [(0.0, 0.0), (1.0, -1.0), (0.0, -8.0), (0.2, 3.0), (4.0, 0.0)])
def test_convergence_surrogate(ball, x0):
    tr = run(ball.plant, long_config(ball), np.array(x0))
    assert ball.target(tr.sol.terminal_state) <= 1e-3
