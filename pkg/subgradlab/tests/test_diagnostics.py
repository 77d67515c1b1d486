"""
Tests for KL fits, proof constants, projected traces, the diameter bound and σ fitting.
"""

import math

import numpy as np
import pytest

from subgradlab.core.exceptions import (
    ConstantsMissing,
    DegenerateSamples,
    Infeasible,
    InsufficientDecades,
    NonDecreasingSchedule,
    ValidationError,
)
from subgradlab.services import corpus
from subgradlab.services.diagnostics import (
    BoundComponents,
    BoundReport,
    LocalConstants,
    ProjectedTrace,
    ProofConstants,
    StratumConstants,
    cauchy_rate_probe,
    check_descent,
    check_diameter_bound,
    compose_rhs,
    desingularizer,
    estimate_kl,
    fit_sigma,
    g_condition_terms,
    g_condition_violations,
    kl_violation_rate,
    neighborhood_membership,
    projected_length_check,
    projected_trace,
    psi,
    tail_sums,
    theorem1_rhs,
)
from subgradlab.services.engine import run


def _scenario_run(name: str, K=None):
    scenario = corpus.get_scenario(name)
    entry = corpus.get(scenario.benchmark)
    traj = run(entry.function, scenario.x0, scenario.schedule, scenario.policy, K or scenario.K, scenario.seed)
    return entry, scenario, traj


def test_psi_and_desingularizer():
    assert psi(4.0, 0.5) == pytest.approx(2.0)
    assert psi(-4.0, 0.5) == pytest.approx(-2.0)
    assert desingularizer(4.0, 0.5, 2.0) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        psi(1.0, 1.0)
    with pytest.raises(ValidationError):
        desingularizer(1.0, 0.5, 0.0)


def test_kl_fit_on_quadratic(quad1d):
    """|x²|′ = 2|x| = 2·(x²)^½."""
    M = quad1d.stratification[0]
    fit = estimate_kl(quad1d.function, M, 0.0, samples=10_000, seed=42, strat=quad1d.stratification)

    assert fit.theta == pytest.approx(0.5, abs=0.02)
    assert fit.eta == pytest.approx(2.0, abs=0.05)
    assert fit.envelope_violations == 0
    assert kl_violation_rate(fit, quad1d.function, M, quad1d.stratification, samples=2000, seed=43) == 0.0


def test_kl_fit_on_cubic_vee():
    """|x|³ has gradient 3x² = 3·(|x|³)^⅔ on either side of 0."""
    entry = corpus.get("vee_pow")
    M = entry.stratification[2]
    fit = estimate_kl(entry.function, M, 0.0, samples=10_000, seed=42, strat=entry.stratification)

    assert fit.theta == pytest.approx(2.0 / 3.0, abs=0.02)
    assert fit.theta == pytest.approx(entry.known_theta[2], abs=0.02)


def test_kl_fit_on_critical_point_is_degenerate(abs1d):
    with pytest.raises(DegenerateSamples):
        estimate_kl(abs1d.function, abs1d.stratification[0], 0.0, samples=100, strat=abs1d.stratification)


def test_proof_constants_lookup(abs1d):
    pc = abs1d.constants

    assert pc.stratum(0).c == pytest.approx(0.02)
    assert pc.stratum(0).beta < pc.stratum(0).gamma
    with pytest.raises(ConstantsMissing):
        pc.stratum(99)
    assert pc.with_sigma(2.0, 3.0).sigma2 == 3.0


def test_proof_constants_document_roundtrip(maxlin2d):
    pc = maxlin2d.constants
    copy = ProofConstants.from_document(pc.to_dict())

    assert copy.theta == pc.theta and copy.beta == pc.beta
    assert copy.stratum(4) == pc.stratum(4)


def test_neighborhood_membership(abs1d):
    """Near the kink only the origin's neighbourhood claims x; far from it only its own side does."""
    pc, strat = abs1d.constants, abs1d.stratification

    assert neighborhood_membership(np.array([0.001]), 0.01, pc, strat) == {0}
    assert neighborhood_membership(np.array([0.5]), 0.01, pc, strat) == {2}
    with pytest.raises(ValidationError):
        neighborhood_membership(np.array([0.5]), 0.0, pc, strat)


def test_tail_sums():
    g = tail_sums(np.array([1.0, 0.5, 0.25]), 2.0, 0.0)

    assert g == pytest.approx([3.5, 1.5, 0.5, 0.0])


@pytest.mark.parametrize("scenario", ["quad1d_descent", "ridge2d_descent"])
def test_descent_on_shadowed_stratum(scenario):
    """½α|∇_M f(y_k)|² ≤ z_k − z_{k+1} and z is nonincreasing."""
    entry, sc, traj = _scenario_run(scenario, K=2000)
    M = entry.stratification[sc.stratum]
    pt = projected_trace(traj, M, entry.constants, entry.function, entry.stratification)
    report = check_descent(pt, entry.function, M)

    assert pt.complete
    assert report["violations"] == []
    assert report["monotone"]
    assert report["checked"] == traj.K


def test_projected_length_on_quadratic():
    entry, sc, traj = _scenario_run("quad1d_descent", K=2000)
    M = entry.stratification[0]
    pt = projected_trace(traj, M, entry.constants, entry.function, entry.stratification)
    klfit = estimate_kl(entry.function, M, 0.0, samples=2000, strat=entry.stratification)
    report = projected_length_check(pt, entry.function, M, klfit, entry.constants)

    assert report["lhs"] == pytest.approx(1.0 - traj.final_point[0])
    assert report["satisfied"]
    assert set(report["components"]) == {
        "psi_term",
        "smoothness_term",
        "distance_term",
        "desingularizer_term",
        "max_step_term",
    }


def test_theorem1_rhs_matches_quadratic_double_sum(rng):
    """The suffix-sum evaluation agrees with the literal O(K²) double sum."""
    pc = ProofConstants(theta=0.4, beta=0.1, epsilon=1.0, alpha_bar=1.0)
    K = 1000
    for _ in range(20):
        steps = np.sort(rng.uniform(1e-4, 0.5, size=K))[::-1]
        components = theorem1_rhs(0.8, 0.1, steps, K, pc)
        powered = steps ** (1 + pc.beta)
        brute = sum(steps[k] * powered[k:].sum() ** pc.theta for k in range(K))

        assert components.double_sum == pytest.approx(brute, rel=1e-12)
        assert components.step_sum == pytest.approx(powered.sum(), rel=1e-12)
        assert components.step_sum_power == pytest.approx(powered.sum() ** 0.6, rel=1e-12)
        assert components.alpha_beta == pytest.approx(steps[0] ** pc.beta)
        assert components.psi_term == pytest.approx(0.8**0.6 - 0.1**0.6)


def test_theorem1_rhs_rejects_rising_steps():
    pc = ProofConstants(theta=0.5, beta=0.1, epsilon=1.0, alpha_bar=1.0)

    with pytest.raises(NonDecreasingSchedule):
        theorem1_rhs(1.0, 0.0, [0.5, 0.6, 0.4], 3, pc)
    relaxed = theorem1_rhs(1.0, 0.0, [0.5, 0.6, 0.4], 3, pc, require_decreasing=False)
    assert relaxed.alpha_beta == pytest.approx(0.6**0.1)
    with pytest.raises(ValidationError):
        theorem1_rhs(1.0, 0.0, [0.5, 0.0], 2, pc)


def test_diameter_bound_flags_hypotheses(abs1d):
    traj = run(abs1d.function, [0.55], "Constant(0.1)", "MinNorm", 200)
    report = check_diameter_bound(traj, abs1d.constants)

    assert report.diam_lhs == pytest.approx(0.6)
    assert report.rhs_total == pytest.approx(compose_rhs(report.components, 1.0, 1.0))
    assert report.hypotheses["decreasing_steps"]
    assert report.hypotheses["in_domain"]
    assert report.to_dict()["satisfied"] == report.satisfied


def test_fitted_sigma_holds_on_fresh_seeds():
    """σ fitted on some seeds keeps the bound satisfied on runs it never saw."""
    grid = [
        (name, schedule, policy)
        for name in ("abs1d", "quad1d", "ridge2d")
        for schedule in ("Harmonic(0.25,1)", "Power(0.1,0.75,1)")
        for policy in ("MinNorm", "RandomVertex")
    ]

    def reports(seeds, pc_for=lambda entry: entry.constants):
        out = []
        for name, schedule, policy in grid:
            entry = corpus.get(name)
            for seed in seeds:
                traj = run(entry.function, entry.default_x0, schedule, policy, 500, seed)
                out.append(check_diameter_bound(traj, pc_for(entry), entry.critical_value))
        return out

    fit = fit_sigma(reports([1, 2]))
    assert fit.included == 2 * len(grid)
    held_out = reports([3, 4], lambda entry: entry.constants.with_sigma(fit.sigma1, fit.sigma2))
    assert all(r.satisfied for r in held_out)


def _report(lhs, psi_term, others):
    components = BoundComponents(psi_term, others, 0.0, 0.0, 0.0)
    return BoundReport(lhs, components, 1.0, 1.0, psi_term + others, lhs <= psi_term + others, 0.0)


def test_fit_sigma_excludes_negative_psi():
    fit = fit_sigma([_report(1.0, 1.0, 1.0), _report(0.5, -1.0, 1.0)])

    assert fit.excluded == 1 and fit.included == 1
    assert fit.sigma1 + fit.sigma2 <= 1.0 + 1e-3
    assert fit.sigma1 * 1.0 + fit.sigma2 * 1.0 >= 1.0


def test_fit_sigma_infeasible():
    with pytest.raises(Infeasible) as excinfo:
        fit_sigma([_report(1.0, 1.0, 1.0), _report(100.0, 1e-9, 1e-9)])

    assert excinfo.value.tightest == 1


def test_cauchy_rate_probe(quad1d):
    short = run(quad1d.function, [1.0], "Harmonic(0.25,1)", "MinNorm", 500)
    with pytest.raises(InsufficientDecades):
        cauchy_rate_probe(short)

    long = run(quad1d.function, [1.0], "Harmonic(0.25,1)", "MinNorm", 2000)
    assert cauchy_rate_probe(long) < 0
    converged = run(quad1d.function, [1.0], "Harmonic(1,1)", "MinNorm", 1000)
    assert cauchy_rate_probe(converged) == -math.inf


def test_stratum_constants_defaults():
    sc = StratumConstants(c=1.0, beta=0.2, gamma=0.5)

    assert sc.omega == 0.0 and sc.eta == 1.0


def _flat_trace(g, distances):
    steps = np.array([0.1, 0.1])
    return ProjectedTrace(0, np.zeros((3, 1)), np.asarray(distances, dtype=float), np.array(g), np.array(g), steps)


def test_g_condition_with_uniform_constants():
    """With d_k = 0 and L = 1 the g-condition reduces to g_k − g_{k+1} ≥ α_k²."""
    local = LocalConstants.uniform(1.0)

    assert g_condition_violations(_flat_trace([1.0, 0.5, 0.0], [0.0, 0.0, 0.0]), local) == []
    assert g_condition_violations(_flat_trace([1.0, 0.999, 0.0], [0.0, 0.0, 0.0]), local) == [0]
    assert g_condition_violations(_flat_trace([1.0, 0.5, 0.0], [np.nan, 0.0, 0.0]), local) == [0]
    with pytest.raises(ValidationError):
        LocalConstants(0.5)
    with pytest.raises(ValidationError):
        LocalConstants(1.0, c_v=-1.0)


def test_local_constant_profiles_are_separate():
    local = LocalConstants(1.0, c_f=0.1, c_v=0.0, c_p=0.5, omega=1.0)
    steps = np.array([0.01])

    assert local.lf(steps)[0] == pytest.approx(10.0)
    assert local.lv(steps)[0] == pytest.approx(1.0)
    assert local.lp(steps)[0] == pytest.approx(50.0)
    sc = StratumConstants(c=1.0, beta=0.2, gamma=0.5, omega=1.0, c_v=0.2)
    assert LocalConstants.from_stratum(1.0, sc).lv(steps)[0] == pytest.approx(20.0)


def test_g_condition_terms_follow_their_own_constant():
    """Inflating L_V moves only the squared-distance term; inflating L_P moves projection and curvature."""
    pt = _flat_trace([1.0, 0.5, 0.0], [0.5, 0.5, 0.5])
    base = g_condition_terms(pt, LocalConstants(1.0))
    wide_v = g_condition_terms(pt, LocalConstants(1.0, c_v=4.0))
    wide_p = g_condition_terms(pt, LocalConstants(1.0, c_p=4.0))

    assert base["distance_squared"] == pytest.approx([0.0125, 0.0125])
    assert base["projection"] == pytest.approx([0.05, 0.05])
    assert base["curvature"] == pytest.approx([0.01, 0.01])
    assert wide_v["distance_squared"] == pytest.approx(16 * base["distance_squared"])
    assert wide_v["projection"] == pytest.approx(base["projection"])
    assert wide_v["curvature"] == pytest.approx(base["curvature"])
    assert wide_p["distance_squared"] == pytest.approx(base["distance_squared"])
    assert wide_p["projection"] == pytest.approx(4 * base["projection"])
    assert wide_p["curvature"] == pytest.approx([0.025, 0.025])


def test_projected_length_inflating_lf_moves_only_smoothness():
    entry, sc, traj = _scenario_run("quad1d_descent", K=200)
    M = entry.stratification[0]
    pt = projected_trace(traj, M, entry.constants, entry.function, entry.stratification)
    klfit = estimate_kl(entry.function, M, 0.0, samples=2000, strat=entry.stratification)
    L = max(1.0, entry.function.lipschitz_bound)

    base = projected_length_check(pt, entry.function, M, klfit, entry.constants, LocalConstants(L))
    inflated = projected_length_check(pt, entry.function, M, klfit, entry.constants, LocalConstants(L, c_f=10 * L))

    assert inflated["components"]["smoothness_term"] == pytest.approx(10 * base["components"]["smoothness_term"])
    for name in ("psi_term", "distance_term", "desingularizer_term", "max_step_term"):
        assert inflated["components"][name] == pytest.approx(base["components"][name])
