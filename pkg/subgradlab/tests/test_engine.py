"""
Tests for step schedules, the subgradient recursion, diameters and convergence verdicts.
"""

import numpy as np
import pytest

from subgradlab.core.exceptions import ValidationError
from subgradlab.services.engine import (
    StepSchedule,
    detect_convergence,
    diameter,
    parse_schedule,
    critical_point_check,
    replay,
    run,
    tail_diameters,
    verdict_window,
)


def _brute_diameter(points: np.ndarray) -> float:
    return float(np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2).max())


@pytest.mark.parametrize(
    "text,expected",
    [
        ("Constant(0.1)", "Constant(0.1)"),
        ("Harmonic(1,1)", "Harmonic(1,1)"),
        (" Power(0.05, 0.5, 1) ", "Power(0.05,0.5,1)"),
        ("Table(0.5,0.25)", "Table(0.5,0.25)"),
    ],
)
def test_parse_schedule_spec(text, expected):
    assert parse_schedule(text).spec == expected


def test_schedule_steps_match_alpha():
    schedule = StepSchedule.power(0.5, 0.75, 2.0)
    steps = schedule.steps(50)

    assert steps == pytest.approx([schedule.alpha(k) for k in range(50)], rel=1e-15)
    assert schedule.decreasing


def test_table_schedule_limits():
    table = parse_schedule("Table(0.5,1.0)")

    assert not table.decreasing
    with pytest.raises(ValidationError):
        table.steps(3)


@pytest.mark.parametrize("text", ["Constant()", "Harmonic(-1)", "Cosine(1)", "Power(1)", "Constant(x)", "nonsense"])
def test_parse_schedule_rejects(text):
    with pytest.raises(ValidationError):
        parse_schedule(text)


def test_quadratic_reaches_minimizer(quad1d):
    """On x² with α_k = 1/(k+1) the second step lands exactly on 0."""
    traj = run(quad1d.function, [1.0], "Harmonic(1,1)", "MinNorm", 100)

    assert traj.points[1] == pytest.approx([-1.0])
    assert traj.points[2] == pytest.approx([0.0])
    verdict = detect_convergence(traj, 1e-6)
    assert verdict.kind == "ConvergedTo"
    assert verdict.point == pytest.approx((0.0,))
    assert critical_point_check(quad1d.function, traj.final_point)


def test_constant_step_oscillates(abs1d):
    """Constant steps on |x| settle into a two-cycle of amplitude α."""
    traj = run(abs1d.function, [0.55], "Constant(0.1)", "MinNorm", 200)
    verdict = detect_convergence(traj, 1e-6)

    assert verdict.kind == "Oscillating"
    assert verdict.amplitude == pytest.approx(0.1, abs=1e-9)
    assert verdict.label.startswith("Oscillating(")


def test_leaving_the_box_truncates(quad1d):
    traj = run(quad1d.function, [1.5], "Constant(2)", "MinNorm", 10)

    assert traj.left_domain
    assert traj.K == 0
    assert detect_convergence(traj, 1e-6).kind == "Truncated"


def test_run_validates_inputs(quad1d):
    with pytest.raises(ValidationError):
        run(quad1d.function, [1.0], "Constant(0.1)", "MinNorm", 0)
    with pytest.raises(ValidationError):
        run(quad1d.function, [3.0], "Constant(0.1)", "MinNorm", 10)
    with pytest.raises(ValidationError):
        run(quad1d.function, [1.0, 0.0], "Constant(0.1)", "MinNorm", 10)


def test_random_policies_are_seed_determined(maxlin2d):
    a = run(maxlin2d.function, [0.0, 0.0], "Harmonic(0.1,1)", "RandomConvexCombination", 50, seed=9)
    b = run(maxlin2d.function, [0.0, 0.0], "Harmonic(0.1,1)", "RandomConvexCombination", 50, seed=9)

    assert np.array_equal(a.points, b.points)
    assert a.seed == 9 and a.policy == "RandomConvexCombination"


def test_replay_reproduces_points(maxlin2d):
    traj = run(maxlin2d.function, [0.5, 0.1], "Power(0.05,0.5,1)", "MinNorm", 400)

    assert np.array_equal(replay(traj.points[0], traj.subgradients, traj.steps), traj.points)
    assert traj.values[0] == pytest.approx(maxlin2d.function(traj.points[0]))


def test_diameter_matches_brute_force(rng):
    walk = np.cumsum(rng.normal(size=(400, 3)), axis=0)

    assert diameter(walk) == pytest.approx(_brute_diameter(walk), rel=1e-12)
    assert diameter(walk, 100, 250) == pytest.approx(_brute_diameter(walk[100:251]), rel=1e-12)
    with pytest.raises(ValidationError):
        diameter(walk, 300, 100)


@pytest.mark.parametrize("dim", [1, 2])
def test_tail_diameters_match_brute_force(rng, dim):
    walk = np.cumsum(rng.normal(size=(300, dim)), axis=0)
    tails = tail_diameters(walk)

    for k in (0, 1, 57, 150, 298, 299):
        assert tails[k] == pytest.approx(_brute_diameter(walk[k:]), rel=1e-12, abs=1e-15)


def test_verdict_window_is_last_tenth():
    assert verdict_window(1000) == 100
    assert verdict_window(5) == 1


def test_critical_point_check(abs1d):
    assert critical_point_check(abs1d.function, [0.0])
    assert not critical_point_check(abs1d.function, [0.5])
    # Within the radius the kink's other piece is admitted.
    assert critical_point_check(abs1d.function, [1e-4], radius=1e-3)
