"""
Tests for exponent assignment and its literal checker.
"""

import numpy as np
import pytest

from subgradlab.core.exceptions import InfeasibleExponents, ValidationError
from subgradlab.services.exponents import ExponentAssignment, StratumExponents, assign_exponents, check_exponents
from subgradlab.services.strata import AffinePatch, OpenRegion, Point, Stratification, Stratum


def _chain(depth: int) -> Stratification:
    """A flag point ⊂ ∂ray ⊂ ∂half-plane ⊂ ∂space in ℝ³, truncated to the given depth."""
    inf = np.inf
    strata = [
        Stratum(0, Point([0.0, 0.0, 0.0]), label="point"),
        Stratum(1, AffinePatch.line([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.0, inf), (0,), "ray"),
        Stratum(2, AffinePatch([0.0, 0.0, 0.0], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [-inf, 0.0], [inf, inf]), (0, 1), "half-plane"),
    ][: depth - 1]
    strata.append(Stratum(depth - 1, OpenRegion((), 3), tuple(range(depth - 1)), "space"))
    return Stratification(tuple(strata), np.array([[-1.0, 1.0]] * 3))


def test_depth_three_chain_is_feasible():
    """θ = 0.5 leaves room for a point, a ray and the open space above it."""
    strat = _chain(3)
    assignment = assign_exponents(strat, 0.5)

    assert check_exponents(assignment, strat) == {"passed": True, "violations": []}
    assert assignment.strata[0].beta == pytest.approx(0.0625)
    assert assignment.strata[0].gamma == pytest.approx(0.1875)
    assert assignment.strata[1].omega == pytest.approx(0.1875)
    assert 0 < assignment.beta < min(e.beta for e in assignment.strata.values())


def test_exponents_increase_with_dimension():
    strat = _chain(4)
    assignment = assign_exponents(strat, 0.3)
    betas = [assignment.strata[i].beta for i in range(4)]

    assert betas == sorted(betas)
    assert check_exponents(assignment, strat)["passed"]


def test_large_theta_on_deep_chain_is_infeasible():
    """θ close to 1 squeezes the range of the bottom stratum below the resolution."""
    with pytest.raises(InfeasibleExponents) as excinfo:
        assign_exponents(_chain(4), 0.999)

    assert excinfo.value.chain == [0, 1, 2, 3]


def test_theta_outside_unit_interval_rejected():
    for theta in (0.0, 1.0, -0.2):
        with pytest.raises(ValidationError):
            assign_exponents(_chain(2), theta)


def test_eta_blow_up_is_respected():
    """A (w)-exponent η > 1 pushes β_i above η·γ_j."""
    strat = _chain(3)
    assignment = assign_exponents(strat, 0.5, eta={2: 1.5})
    top = assignment.strata[2]

    assert top.eta == 1.5
    assert top.beta >= 1.5 * assignment.strata[1].gamma
    assert check_exponents(assignment, strat)["passed"]


def test_checker_flags_tampered_assignment():
    strat = _chain(2)
    good = assign_exponents(strat, 0.5)
    bad = ExponentAssignment(good.theta, good.beta, {0: good.strata[0], 1: StratumExponents(0.01, 0.5, 0.0)})
    report = check_exponents(bad, strat)

    assert not report["passed"]
    assert any("beta_1 > gamma_0" in v for v in report["violations"])
