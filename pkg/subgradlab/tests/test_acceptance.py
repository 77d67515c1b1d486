"""
Long-running end-to-end checks at full sample sizes. Run with `pytest -m slow`.
"""

import numpy as np
import pytest

from subgradlab.main import main
from subgradlab.services import corpus
from subgradlab.services.diagnostics import (
    check_descent,
    check_diameter_bound,
    estimate_kl,
    fit_sigma,
    projected_trace,
)
from subgradlab.services.engine import critical_point_check, detect_convergence, diameter, run, verdict_window

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("name", ["abs1d", "maxlin2d"])
def test_harmonic_runs_converge_to_critical_points(name):
    entry = corpus.get(name)
    traj = run(entry.function, entry.default_x0, "Harmonic(1,1)", "MinNorm", 100_000)
    tail = diameter(traj, traj.K - verdict_window(traj.K), traj.K)

    assert tail < 1e-2
    assert critical_point_check(entry.function, traj.final_point, 1e-6, radius=tail)


def test_constant_steps_oscillate_on_abs(abs1d):
    verdict = detect_convergence(run(abs1d.function, [0.55], "Constant(0.1)", "MinNorm", 1000), 1e-6)

    assert verdict.kind == "Oscillating"
    assert verdict.amplitude == pytest.approx(0.1, abs=1e-9)


@pytest.mark.parametrize("scenario", ["quad1d_descent", "ridge2d_descent"])
def test_descent_over_ten_thousand_steps(scenario):
    sc = corpus.get_scenario(scenario)
    entry = corpus.get(sc.benchmark)
    traj = run(entry.function, sc.x0, sc.schedule, sc.policy, sc.K, sc.seed)
    M = entry.stratification[sc.stratum]
    report = check_descent(projected_trace(traj, M, entry.constants, entry.function, entry.stratification), entry.function, M)

    assert traj.K == 10_000
    assert report["violations"] == []
    assert report["monotone"]


def test_kl_fits_at_full_sample_size(quad1d):
    vee = corpus.get("vee_pow")
    quad = estimate_kl(quad1d.function, quad1d.stratification[0], 0.0, samples=10_000, strat=quad1d.stratification)
    cubic = estimate_kl(vee.function, vee.stratification[1], 0.0, samples=10_000, strat=vee.stratification)

    assert quad.theta == pytest.approx(0.5, abs=0.02)
    assert quad.eta == pytest.approx(2.0, abs=0.05)
    assert cubic.theta == pytest.approx(0.667, abs=0.02)


def test_sigma_fit_generalizes_and_survives_doubling():
    """Fit on 12 runs, hold out 12 with fresh seeds, then double K without refitting."""
    grid = [(name, schedule) for name in ("abs1d", "quad1d", "ridge2d") for schedule in ("Harmonic(0.25,1)", "Power(0.1,0.75,1)")]

    def reports(seeds, K, sigma=None):
        out = []
        for name, schedule in grid:
            entry = corpus.get(name)
            pc = entry.constants if sigma is None else entry.constants.with_sigma(*sigma)
            for seed in seeds:
                traj = run(entry.function, entry.default_x0, schedule, "RandomVertex", K, seed)
                out.append(check_diameter_bound(traj, pc, entry.critical_value))
        return out

    fit = fit_sigma(reports([1, 2], 1000))
    sigma = (fit.sigma1, fit.sigma2)

    assert sum(r.satisfied for r in reports([3, 4], 1000, sigma)) == 12
    assert sum(r.satisfied for r in reports([3, 4], 2000, sigma)) == 12


def test_sweep_traces_match_across_worker_counts(tmp_path):
    args = [
        "sweep", "--benchmarks", "abs1d", "maxlin2d", "ridge2d", "--schedules", "Harmonic(1,1)", "Constant(0.05)",
        "--policies", "MinNorm", "RandomConvexCombination", "--seeds", "1", "2", "--K", "2000", "--traces",
    ]
    for jobs in ("1", "8"):
        assert main([*args, "--jobs", jobs, "--output-dir", str(tmp_path / jobs)]) == 0

    one = sorted((tmp_path / "1" / "traces").iterdir())
    eight = sorted((tmp_path / "8" / "traces").iterdir())
    assert [p.name for p in one] == [p.name for p in eight]
    for a, b in zip(one, eight):
        # Trace headers carry the run config hash and the timestamp line; both are excluded.
        assert a.read_text().splitlines()[2:] == b.read_text().splitlines()[2:]
    assert np.all([p.stat().st_size > 0 for p in one])
