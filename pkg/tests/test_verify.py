import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

from hmpc.costs import TargetSet
from hmpc.simulator import FeedbackPolicy, SimBudget, simulate, zero_input
from hmpc.verify import (
    PowerWitness,
    SampleCloud,
    check_clf,
    check_pd_conditions,
    check_prop5,
    check_stage_bounds,
    check_terminal_bound,
    fd_gradient,
    fit_terminal_gain,
    is_class_k,
)

from oracles import V_STAR, ball_grad_V

ZERO = PowerWitness(0.0)


def ball_cloud(ball, seed=3, count=500, box=None):
    return SampleCloud(seed, count, *(box or ball.sampling_box), input_lo=(0.0,), input_hi=(20.0,))


def ball_jump_cloud(ball, seed=4, count=500):
    return ball_cloud(ball, seed, count, ball.jump_sampling_box)


def test_fd_gradient_matches_hand_derivation(ball, rng):
    lo, hi = ball.sampling_box
    for x in lo + (hi - lo) * rng.random((100, 2)):
        exact = ball_grad_V(x)
        assert np.allclose(fd_gradient(ball.cost.V, x, 1e-5), exact, rtol=1e-7, atol=1e-7), x


def test_sample_cloud_fixed_and_discrete_dimensions():
    xs, us = SampleCloud(1, 200, (0.0, -1.0, 2.0), (1.0, 1.0, 2.0), discrete={0: (0.0, 1.0)}).draw(lambda x, u: True)
    assert set(xs[:, 0]) == {0.0, 1.0}
    assert np.all(xs[:, 2] == 2.0) and us is None
    assert np.all(np.abs(xs[:, 1]) <= 1.0)


def test_sample_cloud_rejects_bad_regions():
    with pytest.raises(ValueError):
        SampleCloud(0, 10, (1.0,), (0.0,))
    with pytest.raises(ValueError):
        SampleCloud(0, 0, (0.0,), (1.0,))
    with pytest.raises(ValueError, match="narrow the region"):
        SampleCloud(0, 10, (0.0,), (1.0,), max_draw_factor=2).draw(lambda x, u: False)


def test_class_k_detection():
    assert is_class_k(PowerWitness(2.0, 1.5))
    assert not is_class_k(ZERO)
    assert not is_class_k(lambda r: r + 1.0)


def test_stage_bounds_hold_with_zero_witness(ball):
    rep = check_stage_bounds(ball.plant, ball.cost, ball.target, ZERO, ZERO, ball_cloud(ball), ball_jump_cloud(ball))
    assert rep.ok and rep.samples["L_C lower bound"] == 500


def test_vanishing_flow_cost_fails_a_positive_witness(ball):
    flat = dataclasses.replace(ball.cost, flow_cost=lambda x, u: 0.0, flow_cost_integral=None)
    rep = check_stage_bounds(ball.plant, flat, ball.target, PowerWitness(1.0), ZERO, ball_cloud(ball), ball_jump_cloud(ball))
    assert rep.count("L_C lower bound") > 0 and rep.count("L_D lower bound") == 0


def test_stage_bounds_on_the_target_are_tight(ball):
    # Points of A: zero distance, zero flow cost; any class-K witness is met there.
    on_target = SampleCloud(5, 50, (0.0, -V_STAR), (0.0, -V_STAR), input_lo=(0.0,), input_hi=(20.0,))
    rep = check_stage_bounds(ball.plant, ball.cost, ball.target, PowerWitness(1.0), ZERO, on_target, on_target)
    assert rep.count("L_C lower bound") == 0


def test_terminal_bound(ball):
    cloud = ball_cloud(ball)
    zero_V = dataclasses.replace(ball.cost, terminal_cost=lambda x: 0.0)
    assert check_terminal_bound(zero_V, ball.target, ZERO, 1.0, cloud).ok
    assert not check_terminal_bound(ball.cost, ball.target, ZERO, 1.0, cloud).ok
    k = fit_terminal_gain(ball.cost, ball.target, 1.0, cloud)
    assert check_terminal_bound(ball.cost, ball.target, PowerWitness(k * (1 + 1e-12)), 1.0, cloud).ok
    with pytest.raises(ValueError):
        check_terminal_bound(ball.cost, ball.target, ZERO, 0.0, cloud)


def test_clf_is_deterministic(ball):
    cloud = ball_cloud(ball, count=300)
    a = check_clf(ball.plant, ball.cost, ball.feedback, cloud, cloud_D=ball_jump_cloud(ball))
    b = check_clf(ball.plant, ball.cost, ball.feedback, cloud, cloud_D=ball_jump_cloud(ball))
    assert a.ok and a.summary() == b.summary()


def test_clf_catches_a_bad_feedback(ball):
    """Kicking to twice the target speed raises V at every impact."""
    bad = dataclasses.replace(ball.feedback, kappa_D=lambda x: np.array([2 * V_STAR]))
    rep = check_clf(ball.plant, ball.cost, bad, ball_cloud(ball, count=200), cloud_D=ball_jump_cloud(ball))
    assert rep.count("jump decrease") > 0


def closed_loop(bundle, x0, t_max):
    policy = FeedbackPolicy(bundle.feedback, bundle.closed_loop_guard)
    return simulate(bundle.plant, np.asarray(x0, float), policy, SimBudget(t_max=t_max, j_max=100))


def min_singular_value_of_flow(A, B, T_s, points=201):
    """min over t in [0, T_s] of the smallest singular value of exp([[A, B], [0, 0]] t)."""
    n, m = B.shape
    At = np.block([[A, B], [np.zeros((m, n)), np.zeros((m, m))]])
    return min(np.linalg.svd(expm(At * t), compute_uv=False)[-1] for t in np.linspace(0, T_s, points))


def test_pd_p3_on_sample_hold_with_singular_value_gain(sh, rng):
    p = sh.params
    c = min_singular_value_of_flow(p.A, p.B, p.T_s)
    assert 0 < c < 1
    starts = [np.concatenate([rng.uniform(-2, 2, 3), [0.0]]) for _ in range(10)]
    sols = [closed_loop(sh, x0, 2.0) for x0 in starts]
    rep = check_pd_conditions(sh.plant, sh.target, sols, PowerWitness(c * (1 - 1e-9)))
    assert all(h["P3"] for h in rep.holds.values())
    assert not any(h["P4"] for h in rep.holds.values())  # the loop converges


def test_pd_conditions_are_vacuous_on_the_target(sh):
    sol = closed_loop(sh, (0.0, 0.0, 0.0, 0.1), 1.0)
    assert all(check_pd_conditions(sh.plant, sh.target, [sol], PowerWitness(1.0)).holds["solution 0"].values())


def test_pd_conditions_on_the_unforced_ball(ball):
    sol = simulate(ball.plant, np.array([1.0, -1.0]), zero_input(ball.plant), SimBudget(t_max=3.0, j_max=20))
    holds = check_pd_conditions(ball.plant, ball.target, [sol], PowerWitness(0.01)).holds["solution 0"]
    assert holds["P1"] and holds["P2"]


def test_pd_velocity_bound_needs_a_cloud(sh):
    with pytest.raises(ValueError):
        check_pd_conditions(sh.plant, sh.target, [], ZERO, sigma=ZERO)


def test_prop5_energy_gap_has_zero_growth(ball):
    vt, lam = ball.growth_candidate
    cloud = ball_cloud(ball)
    assert check_prop5(ball.plant, ball.target, vt, lam, 2.0, None, cloud).ok
    assert check_prop5(ball.plant, ball.target, vt, 1.0, 2.0, None, cloud).count("flow growth") > 0


def test_prop5_sample_hold(sh):
    vt, lam = sh.growth_candidate
    lo, hi = sh.sampling_box
    ulo, uhi = sh.plant.input_bounds
    cloud = SampleCloud(9, 300, lo, hi, input_lo=ulo, input_hi=uhi)
    cloud_D = SampleCloud(10, 300, *sh.jump_sampling_box, input_lo=ulo, input_hi=uhi)
    assert check_prop5(sh.plant, sh.target, vt, lam, 5.0, None, cloud).ok
    # With the set that only drives z to zero, a jump keeps the distance: identity witness.
    z_only = TargetSet(contains=lambda x: not np.any(x[:2]), distance=lambda x: float(np.linalg.norm(x[:2])))
    rep = check_prop5(sh.plant, z_only, None, 0.0, 5.0, None, cloud, alpha_D=lambda r: r, cloud_D=cloud_D)
    assert rep.ok and rep.samples["jump distance"] == 300
    still = check_prop5(sh.plant, sh.target, None, 0.0, 5.0, ZERO, cloud)
    assert still.count("velocity") > 0
