import math

import numpy as np
import pytest

from hmpc.plant import HybridPlant
from hmpc.simulator import (
    FeedbackPolicy,
    FlowEscapeError,
    InfeasibleStartError,
    InputSequence,
    SimBudget,
    flow_segment,
    simulate,
    zeno_estimate,
    zero_input,
)

from oracles import G, energy, first_impact



def test_first_jump_time_from_one_metre(ball):
    sol = simulate(ball.plant, np.array([1.0, -1.0]), zero_input(ball.plant), SimBudget(t_max=1.0))
    assert sol.dom.jump_times[1] == pytest.approx(first_impact(1.0, -1.0), abs=1e-12)
    assert sol.dom.jump_times[1] == pytest.approx(0.361, abs=1e-3)


def test_ball_at_rest_jumps_in_place(ball):
    sol = simulate(ball.plant, np.zeros(2), zero_input(ball.plant), SimBudget(t_max=1.0, j_max=12))
    assert sol.J == 12 and sol.termination == "j_max"
    assert set(sol.dom.jump_times) == {0.0}
    np.testing.assert_array_equal(sol.terminal_state, [0.0, 0.0])


def test_jump_only_budget(ball):
    sol = simulate(ball.plant, np.zeros(2), zero_input(ball.plant), SimBudget(t_max=0.0, j_max=5))
    assert sol.terminal_time.t == 0.0 and sol.J == 5


def test_sample_hold_jumps_on_the_sampling_grid(sh):
    T_s = sh.params.T_s
    sol = simulate(sh.plant, np.array([1.0, 0.0, 0.0, 0.0]), FeedbackPolicy(sh.feedback), SimBudget(t_max=2.0, j_max=50))
    times = np.array(sol.dom.jump_times[1:-1])
    np.testing.assert_allclose(times, T_s * np.arange(1, times.size + 1), atol=1e-12)
    assert times.size == 10


def test_ballistic_segment_matches_free_fall(ball):
    arc, event = flow_segment(
        ball.plant, np.array([3.0, 0.0]), np.zeros(1), 2.0, SimBudget(max_step=0.01),
        event_guard=lambda x, t: ball.plant.jump_guard(x, np.zeros(1)), force_numeric=True,
    )
    assert event == pytest.approx(math.sqrt(6 / G), abs=1e-10)
    np.testing.assert_allclose(arc.x[:, 0], 3 - 0.5 * G * arc.t**2, atol=1e-9)


def test_thermostat_segment_matches_exponential(thermo):
    arc, event = flow_segment(thermo.plant, np.array([1.0, 10.0]), np.zeros(1), 3.0,
                              SimBudget(max_step=0.01), force_numeric=True)
    assert event is None
    np.testing.assert_allclose(arc.x[:, 1], 15 - 5 * np.exp(-arc.t), atol=1e-9)
    for t in np.linspace(0, 3, 17):
        assert arc.state(t)[1] == pytest.approx(15 - 5 * math.exp(-t), abs=1e-8)


def test_zero_duration_segment(ball):
    arc, event = flow_segment(ball.plant, np.array([2.0, 1.0]), np.zeros(1), 0.0, SimBudget())
    assert arc.t.size == 1 and event is None


def test_energy_constant_along_numeric_flows(ball):
    sol = simulate(ball.plant, np.array([2.0, 3.0]), FeedbackPolicy(ball.feedback, ball.closed_loop_guard),
                   SimBudget(t_max=8.0, j_max=10), force_numeric=True)
    assert sol.J >= 3
    for a in sol.arcs:
        w = np.array([energy(x) for x in a.x])
        assert np.ptp(w) <= 1e-8


def test_infeasible_start(ball):
    with pytest.raises(InfeasibleStartError):
        simulate(ball.plant, np.array([-1.0, 0.0]), zero_input(ball.plant), SimBudget())


def test_flow_escape_is_reported():
    plant = HybridPlant(
        state_dim=1, input_dim=1,
        flow_map=lambda x, u: np.array([-1.0]), jump_map=lambda x, u: x,
        flow_guard=lambda x, u: -x[0], jump_guard=lambda x, u: x[0] + 5,
    )
    with pytest.raises(FlowEscapeError):
        simulate(plant, np.array([1.0]), zero_input(plant), SimBudget(t_max=3.0))


def test_input_sequence_runs_out(ball):
    policy = InputSequence(np.zeros(1), [np.array([5.0])], tail_duration=0.25)
    sol = simulate(ball.plant, np.array([0.0, -2.0]), policy, SimBudget(t_max=5.0))
    assert sol.J == 1 and sol.termination == "input_exhausted"
    assert sol.terminal_time.t == pytest.approx(0.25)
    np.testing.assert_allclose(sol.arcs[1].x[0], [0.0, 0.9 * 2 + 5])


def test_zeno_ball_is_truncated_near_the_accumulation_time(ball):
    sol = simulate(ball.plant, np.array([1.0, -1.0]), zero_input(ball.plant), SimBudget(t_max=20.0, j_max=1000))
    v1 = math.sqrt(1 + 2 * G)
    t_acc = first_impact(1.0, -1.0) + (2 * v1 / G) * 0.9 / (1 - 0.9)
    assert sol.termination == "zeno-truncated"
    assert sol.terminal_time.t == pytest.approx(t_acc, abs=1e-6)
    est = zeno_estimate(sol)
    assert est is not None and est.ratio == pytest.approx(0.9, abs=1e-6)


def test_zeno_estimate_from_a_short_run(ball):
    sol = simulate(ball.plant, np.array([1.0, -1.0]), zero_input(ball.plant), SimBudget(t_max=5.0, j_max=50))
    v1 = math.sqrt(1 + 2 * G)
    est = zeno_estimate(sol)
    assert est.accumulation_time == pytest.approx(first_impact(1.0, -1.0) + 18 * v1 / G, rel=1e-9)


def test_no_zeno_for_sampled_systems(sh):
    sol = simulate(sh.plant, np.array([1.0, 0.0, 0.0, 0.0]), FeedbackPolicy(sh.feedback), SimBudget(t_max=2.0))
    assert zeno_estimate(sol) is None


def impact_grid():
    xs = np.linspace(0.0, 5.0, 10)
    vs = np.linspace(-5.0, 5.0, 10)
    return [(a, b) for a in xs for b in vs]


def test_closed_form_and_numeric_impacts_agree(ball):
    grid = impact_grid()
    assert len(grid) == 100
    guard = lambda x, t: ball.plant.jump_guard(x, np.zeros(1))
    worst_t = worst_v = 0.0
    for x0 in grid:
        x0 = np.array(x0)
        exact, ev_c = flow_segment(ball.plant, x0, np.zeros(1), 5.0, SimBudget(), event_guard=guard)
        numeric, ev_n = flow_segment(ball.plant, x0, np.zeros(1), 5.0, SimBudget(), event_guard=guard, force_numeric=True)
        assert ev_c is not None and ev_n is not None
        worst_t = max(worst_t, abs(ev_c - ev_n))
        worst_v = max(worst_v, abs(exact.x[-1, 1] - numeric.x[-1, 1]))
    assert worst_t <= 1e-8
    assert worst_v <= 1e-7


def test_reruns_are_bitwise_identical(ball, sh):
    for bundle, x0 in ((ball, [3.0, 4.0]), (sh, [1.0, -0.5, 0.0, 0.1])):
        runs = [
            simulate(bundle.plant, np.array(x0), FeedbackPolicy(bundle.feedback, bundle.closed_loop_guard),
                     SimBudget(t_max=4.0, j_max=20), force_numeric=True)
            for _ in range(2)
        ]
        assert runs[0].dom.jump_times == runs[1].dom.jump_times
        for a, b in zip(runs[0].arcs, runs[1].arcs):
            assert np.array_equal(a.x, b.x)
