"""
Tests for segment distances and the crossing-index bookkeeping.
"""

import numpy as np
import pytest

from subgradlab.services import corpus
from subgradlab.services.engine import run
from subgradlab.services.indices import (
    IndexTrace,
    check_index_invariants,
    extract_indices,
    run_length_encode,
    segment_distance,
)


def test_segment_distance_to_point_and_ray(maxlin2d):
    strat = maxlin2d.stratification

    assert segment_distance(np.array([-1.0, 0.5]), np.array([1.0, 0.5]), 0, strat) == pytest.approx(0.5)
    # Ridge 2 bisects the first two normals and points up and to the left.
    ridge = strat[2].shape
    a = ridge.base + 0.5 * ridge.basis[0] + np.array([0.3, 0.3])
    b = ridge.base + 0.5 * ridge.basis[0] - np.array([0.3, 0.3])
    assert segment_distance(a, b, 2, strat) == pytest.approx(0.0, abs=1e-12)


def test_run_length_encode():
    assert run_length_encode([1, 2, 3, 7, 9, 10]) == [(1, 3), (7, 7), (9, 10)]
    assert run_length_encode([]) == []


def test_hand_checked_crossing_on_abs():
    """0.105 − 0.01k reaches ±0.005 at k = 10 and two-cycles across the kink from there."""
    scenario = corpus.get_scenario("abs1d_crossing")
    entry = corpus.get(scenario.benchmark)
    traj = run(entry.function, scenario.x0, scenario.schedule, scenario.policy, scenario.K, scenario.seed)
    trace = extract_indices(traj, entry.constants, entry.stratification)

    assert trace.I_C == list(range(10, 20))
    assert trace.l == [10]
    assert trace.G[10] == 0
    assert trace.s[10] == 19
    assert trace.q[10] == 19
    assert trace.H[10] is None
    assert trace.U[10] == 1
    assert check_index_invariants(trace, len(entry.stratification.non_open())) == []


def test_far_run_has_no_crossings(abs1d):
    traj = run(abs1d.function, [1.5], "Constant(0.001)", "MinNorm", 100)
    trace = extract_indices(traj, abs1d.constants, abs1d.stratification)

    assert trace.I_C == []
    assert trace.l == []
    assert trace.to_dict()["I_C"] == []


def test_maxlin_invariants_over_seeds(maxlin2d):
    """Ordering invariants hold on every seeded run towards the triple point."""
    T = len(maxlin2d.stratification.non_open())
    rng = np.random.default_rng(0)
    for seed in range(50):
        x0 = np.array([0.5, 0.1]) + rng.uniform(-0.05, 0.05, size=2)
        traj = run(maxlin2d.function, x0, "Power(0.05,0.5,1)", "RandomVertex", 400, seed)
        trace = extract_indices(traj, maxlin2d.constants, maxlin2d.stratification)

        assert trace.I_C, f"seed {seed} never approached a non-open stratum"
        assert check_index_invariants(trace, T) == [], f"seed {seed}"


def test_invariant_checker_flags_broken_trace():
    trace = IndexTrace(K=10, I_C=[2, 3], G={2: 0, 3: 0}, l=[3], s={3: 2}, q={3: 3}, H={3: None}, U={3: 5})

    assert set(check_index_invariants(trace, 1)) == {"l_le_q_le_s", "l0_is_first_crossing", "U_bounded"}
