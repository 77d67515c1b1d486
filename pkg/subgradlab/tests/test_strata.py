"""
Tests for stratum shapes, projections, validation and the (w)-condition fit.
"""

import numpy as np
import pytest

from subgradlab.core.exceptions import OutsideTube, ValidationError
from subgradlab.services.piecewise import Polynomial
from subgradlab.services.strata import (
    AffinePatch,
    Graph,
    OpenRegion,
    Point,
    Sphere,
    Stratification,
    Stratum,
    check_projection_lipschitz,
    distance,
    distance_to_frontier,
    estimate_w_constants,
    normal_projector,
    project,
    stratification_from_document,
    tangent_projector,
    validate_stratification,
)


def _parabola_strat() -> Stratification:
    """Graph of y = x² over (−1, 1) with its two endpoints, inside two open sides."""
    box = np.array([[-1.5, 1.5], [-1.0, 2.0]])
    curve = Graph([-1.0], [1.0], (Polynomial.from_terms({(2,): 1.0}, 1),), 2.0)
    above = Polynomial.from_terms({(2, 0): 1.0, (0, 1): -1.0}, 2)
    return Stratification(
        (
            Stratum(0, Point([-1.0, 1.0]), label="left end"),
            Stratum(1, Point([1.0, 1.0]), label="right end"),
            Stratum(2, curve, (0, 1), "parabola"),
            Stratum(3, OpenRegion((above,), 2), (0, 1, 2), "above"),
        ),
        box,
    )


def test_point_projection_and_distance():
    """A point stratum projects everything onto itself."""
    M = Stratum(0, Point([1.0, 2.0]))

    assert project(M, np.array([4.0, 6.0])) == pytest.approx([1.0, 2.0])
    assert distance(np.array([4.0, 6.0]), M) == pytest.approx(5.0)
    assert np.all(tangent_projector(M, np.array([1.0, 2.0])) == 0.0)


def test_affine_ray_clips_to_its_box():
    """A ray's nearest point is its apex for points behind it."""
    ray = Stratum(0, AffinePatch.line([0.0, 0.0], [1.0, 1.0], 0.0, np.inf))

    assert project(ray, np.array([2.0, 0.0])) == pytest.approx([1.0, 1.0])
    assert project(ray, np.array([-1.0, -3.0])) == pytest.approx([0.0, 0.0])
    P = tangent_projector(ray, np.array([1.0, 1.0]))
    assert P + normal_projector(ray, np.array([1.0, 1.0])) == pytest.approx(np.eye(2))


def test_affine_basis_must_be_orthonormal():
    """Non-orthonormal bases are rejected at construction."""
    with pytest.raises(ValidationError):
        AffinePatch([0.0, 0.0], [[2.0, 0.0]], [-1.0], [1.0])


def test_sphere_projection_and_center():
    """The sphere projects radially and refuses its center."""
    M = Stratum(0, Sphere([0.0, 0.0], 1.0))

    assert project(M, np.array([3.0, 4.0])) == pytest.approx([0.6, 0.8])
    assert distance(np.array([0.0, 0.5]), M) == pytest.approx(0.5)
    with pytest.raises(OutsideTube):
        project(M, np.zeros(2))


def test_graph_projection_matches_grid():
    """Gauss-Newton on y = x² lands where a dense grid does."""
    strat = _parabola_strat()
    curve = strat[2].shape
    x = np.array([0.4, 0.6])

    p = curve.project(x)
    assert p[1] == pytest.approx(p[0] ** 2)
    assert np.linalg.norm(p - x) == pytest.approx(curve.grid_distance(x), abs=1e-5)


def test_graph_projection_ambiguous_on_axis():
    """Points on the symmetry axis above the center of curvature have two nearest points."""
    curve = _parabola_strat()[2].shape

    with pytest.raises(OutsideTube):
        curve.project(np.array([0.0, 1.5]))


def test_open_region_distance_from_outside(abs1d):
    """Outside its closure an open stratum is measured through its frontier."""
    strat = abs1d.stratification

    assert strat.distance(np.array([0.5]), 1) == pytest.approx(0.5)
    assert strat.distance(np.array([-0.5]), 1) == 0.0
    assert strat.project(np.array([0.5]), 1) == pytest.approx([0.0])
    assert distance_to_frontier(np.array([0.25]), strat[2], strat) == pytest.approx(0.25)


def test_frontier_must_have_lower_dimension():
    """A frontier stratum of equal dimension is rejected."""
    with pytest.raises(ValidationError):
        Stratification(
            (
                Stratum(0, AffinePatch.line([0.0, 0.0], [1.0, 0.0])),
                Stratum(1, AffinePatch.line([0.0, 0.0], [0.0, 1.0]), (0,)),
            ),
            np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        )


def test_validate_stratification_on_corpus(abs1d, ridge2d):
    """Shipped stratifications pass every declarative check."""
    for entry in (abs1d, ridge2d):
        report = validate_stratification(entry.stratification, samples=200)
        assert report["passed"], report


def test_validate_stratification_detects_undeclared_frontier():
    """Dropping a frontier declaration fails the frontier check."""
    strat = Stratification(
        (
            Stratum(0, Point([0.0])),
            Stratum(1, OpenRegion((Polynomial.affine([1.0]),), 1), (0,)),
            Stratum(2, OpenRegion((Polynomial.affine([-1.0]),), 1), (0,)),
            Stratum(3, Point([0.5])),
        ),
        np.array([[-2.0, 2.0]]),
    )

    report = validate_stratification(strat, samples=100)
    assert not report["frontier"]["passed"]
    assert not report["passed"]


@pytest.mark.parametrize("name", ["maxlin2d", "ridge2d"])
def test_projection_is_nonexpansive_near_lines_and_points(name, request):
    strat = request.getfixturevalue(name).stratification
    for M in strat.non_open():
        report = check_projection_lipschitz(strat, M.id, 0.05, 0.05, 1.0, pairs=300)

        assert report["passed"], (M.id, report)
        assert report["pairs_tested"] > 0


def test_projection_lipschitz_flags_understated_bound(maxlin2d, ridge2d):
    """Projection onto a line has Lipschitz constant 1, so a claimed 0.5 fails."""
    report = check_projection_lipschitz(ridge2d.stratification, 0, 0.05, 0.05, 0.5, pairs=300)
    assert not report["passed"]
    assert report["worst_ratio"] > 0.5

    validated = validate_stratification(maxlin2d.stratification, samples=200, projection_tubes={1: (0.05, 0.05, 0.5)})
    assert not validated["projection_lipschitz"]["passed"]
    assert not validated["passed"]
    assert validated["projection_lipschitz"]["strata"][1]["lipschitz"] == 0.5


def test_stratification_document_roundtrip(maxlin2d):
    """A stratification survives its JSON document form, including infinite bounds."""
    strat = maxlin2d.stratification
    copy = stratification_from_document(strat.to_document())
    x = np.array([0.7, -0.2])

    for M in strat:
        assert copy.distance(x, M.id) == pytest.approx(strat.distance(x, M.id))


def test_w_condition_fit_on_saddle():
    """The saddle z = xy over a segment of its frontier axis needs no blow-up: η = 0 and C ≤ 1."""
    saddle = Graph([-1.0, 0.0], [1.0, 1.0], (Polynomial.from_terms({(1, 1): 1.0}, 2),), 2.0)
    strat = Stratification(
        (
            Stratum(0, AffinePatch.line([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], -1.0, 1.0), label="axis"),
            Stratum(1, saddle, (0,), "saddle"),
        ),
        np.array([[-1.5, 1.5]] * 3),
    )
    fit = estimate_w_constants(strat, 1, 0, samples=400)

    assert fit.i == 1 and fit.j == 0
    assert fit.sample_count >= 10
    assert fit.eta == 0.0
    assert 0.0 < fit.C <= 1.0 + 1e-12
    assert fit.max_violation == pytest.approx(0.0, abs=1e-12)


def test_w_condition_requires_frontier_pair(abs1d):
    """Only declared frontier pairs can be fitted."""
    with pytest.raises(ValidationError):
        estimate_w_constants(abs1d.stratification, 1, 2)
