"""
Tests for the benchmark registry, named cells and scenarios.
"""

import importlib

import pytest

from subgradlab.core import config
from subgradlab.core.exceptions import NotFoundError, UnknownBenchmark, ValidationError
from subgradlab.services import corpus
from subgradlab.services.engine import critical_point_check
from subgradlab.services.exponents import assign_exponents, check_exponents


def test_list_benchmarks():
    assert corpus.list_benchmarks() == ["abs1d", "maxlin2d", "nonconvex_ring", "quad1d", "ridge2d", "vee_pow"]


@pytest.mark.parametrize(
    "name,strata,non_open",
    [("abs1d", 3, 1), ("quad1d", 1, 0), ("maxlin2d", 7, 4), ("ridge2d", 3, 1), ("vee_pow", 3, 1), ("nonconvex_ring", 3, 1)],
)
def test_stratum_counts(name, strata, non_open):
    summary = corpus.get(name).summary()

    assert summary["strata"] == strata
    assert summary["non_open_strata"] == non_open


@pytest.mark.parametrize("name", corpus.list_benchmarks())
def test_critical_set_is_critical(name):
    """Every listed critical point has 0 in its Clarke subdifferential."""
    entry = corpus.get(name)
    for x in entry.critical_set:
        assert critical_point_check(entry.function, x, tol=1e-8), x
        assert entry.function(x) == pytest.approx(entry.critical_value)


@pytest.mark.parametrize("name", corpus.list_benchmarks())
def test_default_start_and_constants(name):
    entry = corpus.get(name)

    assert entry.function.in_box(entry.default_x0)
    entry.constants.require(entry.stratification.ids)
    assert 0 < entry.constants.beta


def test_known_theta(quad1d, abs1d):
    assert quad1d.known_theta == {0: 0.5}
    assert abs1d.known_theta[2] == 0.0


def test_unknown_benchmark():
    with pytest.raises(UnknownBenchmark) as excinfo:
        corpus.get("nope")

    assert "abs1d" in excinfo.value.details["available"]


@pytest.mark.parametrize("name", corpus.list_benchmarks())
def test_validate_entry_passes_on_every_benchmark(name):
    report = corpus.validate_entry(corpus.get(name), samples=300)

    assert report["function"]["passed"]
    assert report["stratification"]["passed"]
    assert report["stratification"]["projection_lipschitz"]["strata"].keys() == {
        M.id for M in corpus.get(name).stratification.non_open()
    }


def test_failing_function_report_stops_validation(ridge2d, monkeypatch):
    monkeypatch.setattr(
        corpus, "check_function", lambda *a, **k: {"gradient_consistency": {"passed": False}, "passed": False}
    )

    with pytest.raises(ValidationError) as excinfo:
        corpus.validate_entry(ridge2d, samples=200)
    assert excinfo.value.details["failed_checks"] == ["function.gradient_consistency"]
    assert excinfo.value.details["benchmark"] == "ridge2d"


def test_load_time_validation_rejects_broken_benchmark(monkeypatch):
    monkeypatch.setattr(corpus, "CORPUS_VALIDATE_ON_LOAD", True)
    monkeypatch.setattr(corpus, "check_function", lambda *a, **k: {"lipschitz_bound": {"passed": False}, "passed": False})

    with pytest.raises(ValidationError):
        corpus.get.__wrapped__("abs1d")


def test_load_time_validation_is_on_by_default(monkeypatch):
    monkeypatch.delenv("SUBGRADLAB_CORPUS_VALIDATE_ON_LOAD", raising=False)

    assert importlib.reload(config).CORPUS_VALIDATE_ON_LOAD is True

def test_cells_and_scenarios_are_registered():
    assert corpus.list_cells() == ["graph", "horseshoe", "interval", "square", "triangle"]
    assert "abs1d_crossing" in corpus.list_scenarios()
    assert corpus.get_scenario("ridge2d_descent").stratum == 0
    with pytest.raises(NotFoundError):
        corpus.get_scenario("missing")


def test_shipped_exponents_are_consistent(maxlin2d):
    """Exponents baked into the shipped constants pass the literal checker."""
    assignment = assign_exponents(maxlin2d.stratification, maxlin2d.constants.theta)
    assert check_exponents(assignment, maxlin2d.stratification)["passed"]
    assert assignment.beta == pytest.approx(maxlin2d.constants.beta)
