import math

import numpy as np
import pytest

from hmpc.horizon import PredictionHorizon, make_generic, reached
from hmpc.ocp import BruteGrid, GridTooLarge, OcpOptions, Transcription, brute_force_value, solve, value
from hmpc.plant import validate_solution

from hmpc.costs import running_cost_up_to

from oracles import C_STAR, G, LAM, V_STAR, ball_L_C, ball_L_D, ball_V, energy, first_impact

T2 = make_generic(2, 0.5)


def test_value_vanishes_on_the_target(ball):
    assert value(ball.plant, ball.cost, T2, np.array([0.0, -V_STAR])) <= 1e-12


def test_from_rest_the_single_kick_is_optimal(ball):
    """From (0, 0) the jump cost alone is an attained lower bound."""
    res = solve(ball.plant, ball.cost, T2, np.array([0.0, 0.0]))
    assert res.feasible
    assert res.cost == pytest.approx(ball_L_D(0.0), rel=1e-6)
    assert res.sol.jump_inputs[0][0] == pytest.approx(V_STAR, abs=1e-4)
    assert energy(res.sol.arcs[1].x[0]) == pytest.approx(C_STAR, abs=1e-4)


def test_from_rest_against_the_one_dimensional_grid(ball):
    """Once on the target the remaining cost is zero, so N = 5 and N = 2 share the value."""
    grid = BruteGrid(np.linspace(0.0, 20.0, 400), max_jumps=1)
    brute = brute_force_value(ball.plant, ball.cost, T2, np.zeros(2), grid)
    long = value(ball.plant, ball.cost, make_generic(5, 0.5), np.zeros(2))
    assert long == pytest.approx(value(ball.plant, ball.cost, T2, np.zeros(2)), rel=1e-9)
    assert long == pytest.approx(brute, rel=1e-3) and long <= brute


def test_from_one_metre_against_the_fine_single_jump_grid(ball):
    x0 = np.array([1.0, -1.0])
    brute = brute_force_value(ball.plant, ball.cost, T2, x0, BruteGrid(np.arange(0.0, 15.0 + 1e-9, 0.05), max_jumps=1))
    assert value(ball.plant, ball.cost, T2, x0) <= brute + 1e-4


def test_single_point_grid_costs_its_one_candidate(ball):
    """Hand-computed cost of: fall, kick with u = 7, fly until t = 1."""
    x0, u = (1.0, -1.0), 7.0
    t1 = first_impact(*x0)
    v1 = x0[1] - G * t1
    up = -LAM * v1 + u
    tau = 1.0 - t1
    xT = (up * tau - G * tau**2 / 2, up - G * tau)
    expected = t1 * ball_L_C(x0) + ball_L_D(v1) + tau * ball_L_C((0.0, up)) + ball_V(xT)
    got = brute_force_value(ball.plant, ball.cost, T2, np.array(x0), BruteGrid((u,), max_jumps=1))
    assert got == pytest.approx(expected, rel=1e-6)


def test_value_decreases_along_the_optimal_pair(ball):
    x0 = np.array([0.0, -8.0])
    opts = OcpOptions(feedback=ball.feedback, feedback_guard=ball.closed_loop_guard)
    res = solve(ball.plant, ball.cost, T2, x0, opts)
    sol = res.sol
    nodes = [(t, j) for j, a in enumerate(sol.arcs) for t in a.t]
    for k in np.linspace(1, len(nodes) - 2, 5).astype(int):
        t, j = nodes[k]
        later = value(ball.plant, ball.cost, T2, sol.x(t, j), opts)
        assert later <= res.cost - running_cost_up_to(ball.cost, sol, (t, j)) + 5e-4


@pytest.mark.parametrize("x0", [(0.0, 0.0), (1.0, -1.0), (0.0, -8.0), (2.0, -2.0), (0.2, 3.0)])
def test_feasible_solution_is_a_valid_first_reach_pair(ball, x0):
    res = solve(ball.plant, ball.cost, T2, np.array(x0))
    assert res.feasible
    assert validate_solution(ball.plant, res.sol).valid
    assert reached(T2, res.sol.dom) == res.sol.terminal_time
    assert res.transcription == Transcription.from_solution(res.sol, T2)
    assert sum(res.transcription.flow_durations) == pytest.approx(res.sol.terminal_time.t, abs=1e-12)


@pytest.mark.parametrize("x0", [(1.0, -1.0), (0.5, 0.0), (0.0, -3.0)])
def test_solve_is_no_worse_than_the_grid_oracle(ball, x0):
    grid = BruteGrid(np.linspace(0.0, 20.0, 81), max_jumps=2)
    brute = brute_force_value(ball.plant, ball.cost, T2, np.array(x0), grid)
    assert math.isfinite(brute)
    assert value(ball.plant, ball.cost, T2, np.array(x0)) <= brute + 1e-4


def test_oracle_improves_under_grid_refinement(ball):
    x0 = np.array([1.0, -1.0])
    coarse = brute_force_value(ball.plant, ball.cost, T2, x0, BruteGrid(np.linspace(0, 20, 11)))
    fine = brute_force_value(ball.plant, ball.cost, T2, x0, BruteGrid(np.linspace(0, 20, 41)))
    assert fine <= coarse


def test_oracle_without_enough_jumps_is_infinite(ball):
    # Reaching the horizon from a ball on the ground needs at least one jump.
    grid = BruteGrid(np.linspace(0, 20, 11), max_jumps=0)
    assert brute_force_value(ball.plant, ball.cost, make_generic(5, 0.5), np.zeros(2), grid) == math.inf


def test_oracle_grid_limits(ball, thermo):
    x0 = np.array([1.0, -1.0])
    with pytest.raises(GridTooLarge):
        brute_force_value(ball.plant, ball.cost, T2, x0, BruteGrid(np.linspace(0, 1, 401)))
    with pytest.raises(GridTooLarge):
        brute_force_value(ball.plant, ball.cost, T2, x0, BruteGrid((0.0,), max_jumps=3))
    with pytest.raises(GridTooLarge):
        brute_force_value(ball.plant, ball.cost, make_generic(3, 0.5), x0,
                          BruteGrid(np.linspace(0, 1, 300), max_candidates=1000))
    with pytest.raises(GridTooLarge):
        brute_force_value(thermo.plant, thermo.cost, thermo.horizon, np.array([0.0, 0.5]), BruteGrid((0.0,)))


def test_thermostat_matches_the_duration_oracle(thermo):
    x0 = np.array([1.0, thermo.params.z_max + 3.0])  # too hot with the heater on
    T = thermo.horizon
    grid = BruteGrid((), duration_grid=np.linspace(0.0, T.thresholds[0], 41), max_jumps=2)
    brute = brute_force_value(thermo.plant, thermo.cost, T, x0, grid)
    res = solve(thermo.plant, thermo.cost, T, x0)
    assert res.feasible and math.isfinite(brute)
    assert res.cost <= brute + 1e-4
    assert validate_solution(thermo.plant, res.sol).valid


def test_infeasible_start_reports_residuals(ball):
    # Below the floor the ball is outside C and D, so no candidate exists.
    res = solve(ball.plant, ball.cost, T2, np.array([-1.0, 0.0]), OcpOptions(seeds=1, penalty_rounds=1))
    assert not res.feasible and res.cost == math.inf
    assert res.residuals.worst() > 0


def test_ties_go_to_fewer_jumps(ball):
    # On the target both the flow-only and the one-jump candidate cost nothing.
    res = solve(ball.plant, ball.cost, PredictionHorizon((0.5, 0.5, 0.0)), np.array([0.0, -V_STAR]))
    costs = {c["jump_count"]: c["cost"] for c in res.candidates if c["residual"] <= 1e-6}
    if len(costs) > 1 and abs(costs[min(costs)] - costs[max(costs)]) <= 1e-9:
        assert res.jump_count == min(costs)


def test_options_validation():
    with pytest.raises(ValueError):
        OcpOptions(feas_tol=0.0)
    with pytest.raises(ValueError):
        OcpOptions(seeds=0)
