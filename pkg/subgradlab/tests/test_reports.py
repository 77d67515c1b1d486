"""
Tests for trace and sweep exports, hashing helpers and the metrics registry.
"""

import json
import math

import numpy as np
import pytest

from subgradlab.core.config import SWEEP_SCHEMA_VERSION, TRACE_SCHEMA_VERSION
from subgradlab.core.utils import atomic_write_text, config_hash, to_jsonable
from subgradlab.services.engine import detect_convergence, run
from subgradlab.services.observability import observability
from subgradlab.services.reports import (
    SWEEP_COLUMNS,
    read_trace_csv,
    render_sweep_csv,
    render_trace_csv,
    run_summary,
    strip_timestamp,
    tail_curve,
    trace_columns,
    write_trace_csv,
)


@pytest.fixture
def ridge_traj(ridge2d):
    return run(ridge2d.function, [0.5, 1.0], "Harmonic(0.25,1)", "MinNorm", 50, seed=7)


def test_trace_header_and_columns(ridge_traj):
    text = render_trace_csv(ridge_traj, "abc123", timestamp="2024-01-01T00:00:00+00:00")
    lines = text.splitlines()

    assert lines[0] == f"# schema={TRACE_SCHEMA_VERSION} config_hash=abc123 seed=7"
    assert lines[1] == "# generated_at=2024-01-01T00:00:00+00:00"
    assert lines[2].split(",") == trace_columns(2) == ["k", "x_0", "x_1", "f", "alpha", "vnorm", "policy"]
    assert len(lines) == 3 + ridge_traj.K + 1
    assert lines[-1].endswith(",,,MinNorm")


def test_trace_is_deterministic_modulo_timestamp(ridge2d):
    a = run(ridge2d.function, [0.5, 1.0], "Harmonic(0.25,1)", "RandomVertex", 50, seed=3)
    b = run(ridge2d.function, [0.5, 1.0], "Harmonic(0.25,1)", "RandomVertex", 50, seed=3)
    first = render_trace_csv(a, "h", timestamp="2024-01-01T00:00:00+00:00")
    second = render_trace_csv(b, "h", timestamp="2025-06-30T12:00:00+00:00")

    assert first != second
    assert strip_timestamp(first) == strip_timestamp(second)


def test_trace_file_reads_back(tmp_path, ridge_traj):
    path = write_trace_csv(tmp_path / "nested" / "trace.csv", ridge_traj, "h")
    parsed = read_trace_csv(path)

    assert parsed["meta"]["schema"] == TRACE_SCHEMA_VERSION
    assert np.array_equal(parsed["points"], ridge_traj.points)
    assert np.array_equal(parsed["steps"], ridge_traj.steps)
    assert parsed["policy"] == "MinNorm"


def test_sweep_rows_are_sorted():
    rows = [
        {"benchmark": "ridge2d", "schedule": "Constant(0.1)", "policy": "MinNorm", "seed": 2, "status": "ok"},
        {"benchmark": "abs1d", "schedule": "Harmonic(1,1)", "policy": "MinNorm", "seed": 10, "status": "ok"},
        {"benchmark": "abs1d", "schedule": "Harmonic(1,1)", "policy": "MinNorm", "seed": 9, "tail_diameter": 0.5},
    ]
    lines = render_sweep_csv(rows, "h", timestamp="t").splitlines()

    assert lines[0] == f"# schema={SWEEP_SCHEMA_VERSION} config_hash=h"
    assert lines[2].split(",") == list(SWEEP_COLUMNS)
    assert [line.split(",")[0] + ":" + line.split(",")[3] for line in lines[3:]] == ["abs1d:9", "abs1d:10", "ridge2d:2"]
    assert "0.5" in lines[3]


def test_tail_curve_is_log_spaced(ridge_traj):
    curve = tail_curve(ridge_traj, points=10)

    assert curve[0][0] == 0
    assert curve[-1][0] == ridge_traj.K - 1
    assert all(a[1] >= b[1] for a, b in zip(curve, curve[1:]))


def test_run_summary_is_json_ready(ridge_traj):
    verdict = detect_convergence(ridge_traj, 1e-6)
    summary = run_summary(ridge_traj, verdict, {"K": 50}, "h", None, 0.1, environment={"environment": "test"})
    text = json.dumps(to_jsonable(summary))

    assert json.loads(text)["verdict_label"] == verdict.label
    assert summary["K"] == 50 and summary["critical"] is None


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1.0, 2.0]}) == config_hash({"b": [1.0, 2.0], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16


def test_to_jsonable_handles_numpy_and_infinities():
    converted = to_jsonable({1: np.arange(3), "x": np.float64(math.inf), "n": np.int64(4)})

    assert converted == {"1": [0, 1, 2], "x": "inf", "n": 4}


def test_atomic_write_replaces_file(tmp_path):
    target = tmp_path / "out" / "file.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")

    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["file.txt"]


def test_metrics_exposition(tmp_path):
    observability.log_run("abs1d", 10, "ConvergedTo", 0.0, 0.01)
    observability.log_check("descent", True)
    text = observability.get_metrics()

    assert 'subgradlab_runs_total{benchmark="abs1d",verdict="ConvergedTo"}' in text
    assert "subgradlab_checks_total" in text
    assert observability.write_metrics(tmp_path / "metrics.prom").exists()
