"""
Trace CSV, sweep CSV and summary JSON exports.

Every file starts with a comment line carrying the schema string, config hash and seed, followed
by a single timestamp comment line; everything after it is deterministic.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from subgradlab.core.config import SUMMARY_CURVE_POINTS, SWEEP_SCHEMA_VERSION, TRACE_SCHEMA_VERSION
from subgradlab.core.exceptions import ValidationError
from subgradlab.core.utils import atomic_write_text, get_current_timestamp
from subgradlab.services.engine import Trajectory, Verdict, tail_diameters

SWEEP_COLUMNS = (
    "benchmark",
    "schedule",
    "policy",
    "seed",
    "K",
    "status",
    "verdict",
    "amplitude",
    "tail_diameter",
    "final_value",
    "left_domain",
    "error",
)


def _num(value: float) -> str:
    return repr(float(value))


def trace_columns(dimension: int) -> List[str]:
    return ["k", *[f"x_{i}" for i in range(dimension)], "f", "alpha", "vnorm", "policy"]


def _header(schema: str, config_hash: str, seed: Optional[int], timestamp: Optional[str]) -> str:
    seed_part = "" if seed is None else f" seed={seed}"
    return f"# schema={schema} config_hash={config_hash}{seed_part}\n# generated_at={timestamp or get_current_timestamp()}\n"


def render_trace_csv(traj: Trajectory, config_hash: str, timestamp: Optional[str] = None) -> str:
    """One row per iterate; alpha and vnorm are empty on the final row."""
    buffer = io.StringIO()
    buffer.write(_header(TRACE_SCHEMA_VERSION, config_hash, traj.seed, timestamp))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(trace_columns(traj.dimension))
    norms = np.linalg.norm(traj.subgradients, axis=1) if traj.K else np.empty(0)
    for k, (x, value) in enumerate(zip(traj.points, traj.values)):
        step = _num(traj.steps[k]) if k < traj.K else ""
        vnorm = _num(norms[k]) if k < traj.K else ""
        writer.writerow([k, *[_num(v) for v in x], _num(value), step, vnorm, traj.policy])
    return buffer.getvalue()


def write_trace_csv(path: Union[str, Path], traj: Trajectory, config_hash: str, timestamp: Optional[str] = None) -> Path:
    return atomic_write_text(path, render_trace_csv(traj, config_hash, timestamp))


def read_trace_csv(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a trace file back into arrays; the two comment lines are returned as metadata."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 3 or not lines[0].startswith("# schema="):
        raise ValidationError("not a trace file", field="path", details={"path": str(path)})
    meta = dict(part.split("=", 1) for part in lines[0][2:].split())
    rows = list(csv.DictReader(lines[2:]))
    dimension = sum(1 for column in rows[0] if column.startswith("x_"))
    points = np.array([[float(r[f"x_{i}"]) for i in range(dimension)] for r in rows])
    return {
        "meta": meta,
        "points": points,
        "values": np.array([float(r["f"]) for r in rows]),
        "steps": np.array([float(r["alpha"]) for r in rows if r["alpha"]]),
        "vnorm": np.array([float(r["vnorm"]) for r in rows if r["vnorm"]]),
        "policy": rows[0]["policy"],
    }


def strip_timestamp(text: str) -> str:
    """Drop the timestamp comment so two renders can be compared byte for byte."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# generated_at="))


RUN_TIMING_KEYS = ("wall_seconds", "generated_at")


def strip_run_timing(summary: Mapping[str, Any]) -> Dict[str, Any]:
    """Summary without its wall time and timestamp; two reruns agree on the rest."""
    return {key: value for key, value in summary.items() if key not in RUN_TIMING_KEYS}


def tail_curve(traj: Trajectory, points: int = SUMMARY_CURVE_POINTS) -> List[List[float]]:
    """(k, diam(x_{⟦k,K⟧})) at log-spaced k, for plotting."""
    if traj.K == 0:
        return [[0, 0.0]]
    tails = tail_diameters(traj)
    ks = np.unique(np.round(np.geomspace(1, traj.K, min(points, traj.K))).astype(int)) - 1
    return [[int(k), float(tails[k])] for k in ks]


def run_summary(
    traj: Trajectory,
    verdict: Verdict,
    config: Mapping[str, Any],
    config_hash: str,
    critical: Optional[bool],
    tail_diameter: float,
    diagnostics: Optional[Mapping[str, Any]] = None,
    environment: Optional[Mapping[str, Any]] = None,
    wall_seconds: Optional[float] = None,
) -> Dict[str, Any]:
    return {
        "schema": TRACE_SCHEMA_VERSION,
        "config_hash": config_hash,
        "seed": traj.seed,
        "config": dict(config),
        "benchmark": traj.benchmark,
        "schedule": traj.schedule,
        "policy": traj.policy,
        "K": traj.K,
        "left_domain": traj.left_domain,
        "verdict": verdict.to_dict(),
        "verdict_label": verdict.label,
        "final_point": traj.final_point.tolist(),
        "final_value": float(traj.values[-1]),
        "tail_diameter": tail_diameter,
        "critical": critical,
        "tail_curve": tail_curve(traj),
        "diagnostics": dict(diagnostics or {}),
        "environment": dict(environment or {}),
        "wall_seconds": wall_seconds,
    }


def sweep_sort_key(row: Mapping[str, Any]):
    return (row["benchmark"], row["schedule"], row["policy"], int(row["seed"]))


def render_sweep_csv(rows: Sequence[Mapping[str, Any]], config_hash: str, timestamp: Optional[str] = None) -> str:
    buffer = io.StringIO()
    buffer.write(_header(SWEEP_SCHEMA_VERSION, config_hash, None, timestamp))
    writer = csv.DictWriter(buffer, fieldnames=SWEEP_COLUMNS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in sorted(rows, key=sweep_sort_key):
        writer.writerow({column: _cell(row.get(column, "")) for column in SWEEP_COLUMNS})
    return buffer.getvalue()


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return _num(value)
    return value


def write_sweep_csv(
    path: Union[str, Path], rows: Sequence[Mapping[str, Any]], config_hash: str, timestamp: Optional[str] = None
) -> Path:
    return atomic_write_text(path, render_sweep_csv(rows, config_hash, timestamp))
