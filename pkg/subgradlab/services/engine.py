"""
Subgradient sequences x_{k+1} = x_k − α_k v_k with v_k ∈ ∂f(x_k): step-size schedules,
recorded trajectories, diameters and convergence verdicts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.spatial import ConvexHull, QhullError

from subgradlab.core.config import (
    ACTIVITY_TOL,
    DEFAULT_SEED,
    DIAMETER_REFERENCE_LIMIT,
    HARMONIC_OFFSET,
    VERDICT_WINDOW_FRACTION,
)
from subgradlab.core.exceptions import ValidationError
from subgradlab.services.piecewise import (
    PiecewiseFunction,
    SelectionPolicy,
    clarke_subdifferential,
    min_norm_subgradient,
    select_subgradient,
)

logger = structlog.get_logger(__name__)

SCHEDULE_KINDS = ("Constant", "Harmonic", "Power", "Table")
_SPEC_PATTERN = re.compile(r"^\s*([A-Za-z]+)\s*\((.*)\)\s*$")


def _fmt(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


# ---------------------------------------------------------------------------
# Step sizes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """α_k for Constant(c), Harmonic(c, k0) = c/(k+k0), Power(c, p, k0) = c/(k+k0)^p or an explicit Table."""

    kind: str
    c: float = 1.0
    p: float = 1.0
    k0: float = HARMONIC_OFFSET
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValidationError(f"schedule kind must be one of {SCHEDULE_KINDS}", field="kind")
        if self.kind == "Table":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values or any(not v > 0 for v in self.values):
                raise ValidationError("table steps must be a nonempty list of positive values", field="values")
            return
        if not self.c > 0:
            raise ValidationError("step scale c must be positive", field="c")
        if self.kind in ("Harmonic", "Power") and not self.k0 > 0:
            raise ValidationError("offset k0 must be positive", field="k0")
        if self.kind == "Power" and self.p < 0:
            raise ValidationError("power p must be nonnegative", field="p")

    @classmethod
    def constant(cls, c: float) -> "StepSchedule":
        return cls("Constant", c=c)

    @classmethod
    def harmonic(cls, c: float = 1.0, k0: float = HARMONIC_OFFSET) -> "StepSchedule":
        return cls("Harmonic", c=c, k0=k0)

    @classmethod
    def power(cls, c: float, p: float, k0: float = HARMONIC_OFFSET) -> "StepSchedule":
        return cls("Power", c=c, p=p, k0=k0)

    @classmethod
    def table(cls, values: Sequence[float]) -> "StepSchedule":
        return cls("Table", values=tuple(values))

    def alpha(self, k: int) -> float:
        if self.kind == "Constant":
            return self.c
        if self.kind == "Harmonic":
            return self.c / (k + self.k0)
        if self.kind == "Power":
            return self.c / (k + self.k0) ** self.p
        if k >= len(self.values):
            raise ValidationError(f"table schedule has {len(self.values)} steps, step {k} requested", field="values")
        return self.values[k]

    def steps(self, K: int) -> np.ndarray:
        """α_0..α_{K−1} as a float64 array."""
        k = np.arange(K, dtype=float)
        if self.kind == "Constant":
            return np.full(K, self.c)
        if self.kind == "Harmonic":
            return self.c / (k + self.k0)
        if self.kind == "Power":
            return self.c / (k + self.k0) ** self.p
        if K > len(self.values):
            raise ValidationError(f"table schedule has {len(self.values)} steps, {K} requested", field="values")
        return np.asarray(self.values[:K], dtype=float)

    @property
    def decreasing(self) -> bool:
        """Monotone nonincreasing over the whole schedule."""
        if self.kind == "Table":
            return bool(np.all(np.diff(self.values) <= 0))
        return True

    @property
    def spec(self) -> str:
        if self.kind == "Constant":
            return f"Constant({_fmt(self.c)})"
        if self.kind == "Harmonic":
            return f"Harmonic({_fmt(self.c)},{_fmt(self.k0)})"
        if self.kind == "Power":
            return f"Power({_fmt(self.c)},{_fmt(self.p)},{_fmt(self.k0)})"
        return "Table(" + ",".join(_fmt(v) for v in self.values) + ")"


def parse_schedule(text: Union[str, StepSchedule]) -> StepSchedule:
    """
    Parse `Constant(c)`, `Harmonic(c[,k0])`, `Power(c,p[,k0])` or `Table(a,b,...)`.

    Raises:
        ValidationError: Unknown kind or malformed arguments
    """
    if isinstance(text, StepSchedule):
        return text
    match = _SPEC_PATTERN.match(text)
    if not match:
        raise ValidationError(f"cannot parse schedule {text!r}", field="schedule")
    kind, raw = match.group(1), match.group(2)
    try:
        args = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"schedule arguments must be numbers: {text!r}", field="schedule") from None
    arity = {"Constant": (1, 1), "Harmonic": (1, 2), "Power": (2, 3)}
    if kind == "Table":
        return StepSchedule.table(args)
    if kind not in arity:
        raise ValidationError(f"unknown schedule kind {kind!r}", field="schedule")
    lo, hi = arity[kind]
    if not lo <= len(args) <= hi:
        raise ValidationError(f"{kind} takes {lo} to {hi} arguments", field="schedule")
    if kind == "Constant":
        return StepSchedule.constant(args[0])
    if kind == "Harmonic":
        return StepSchedule.harmonic(*args)
    return StepSchedule.power(*args)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    points: np.ndarray
    subgradients: np.ndarray
    steps: np.ndarray
    values: np.ndarray
    policy: str
    seed: int
    schedule: str = ""
    left_domain: bool = False
    benchmark: str = ""

    def __post_init__(self):
        for name in ("points", "subgradients", "steps", "values"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def K(self) -> int:
        return int(self.steps.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    @property
    def final_point(self) -> np.ndarray:
        return self.points[-1]


def run(
    f: PiecewiseFunction,
    x0: Sequence[float],
    schedule: Union[str, StepSchedule],
    policy: Union[str, SelectionPolicy] = SelectionPolicy.MIN_NORM,
    K: int = 1000,
    seed: int = DEFAULT_SEED,
) -> Trajectory:
    """
    Run K subgradient steps from x0.

    If an iterate leaves f's box the trajectory stops before it and is flagged `left_domain`.

    Raises:
        ValidationError: K < 1, or x0 of the wrong dimension or outside the box
    """
    if K < 1:
        raise ValidationError("K must be at least 1", field="K")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != f.dimension:
        raise ValidationError(f"x0 has dimension {x.shape[0]}, f lives in R^{f.dimension}", field="x0")
    if not f.in_box(x):
        raise ValidationError("x0 lies outside the stated box", field="x0", details={"x0": x.tolist()})

    schedule = parse_schedule(schedule)
    policy = SelectionPolicy(policy)
    rng = np.random.default_rng(seed)
    alphas = schedule.steps(K)

    points: List[np.ndarray] = [x]
    subgradients: List[np.ndarray] = []
    values: List[float] = [float(f(x))]
    left_domain = False
    for k in range(K):
        v = select_subgradient(clarke_subdifferential(f, x), policy, rng)
        x_next = x - alphas[k] * v
        if not f.in_box(x_next):
            left_domain = True
            logger.debug("iterate left the box", benchmark=f.name, step=k)
            break
        subgradients.append(v)
        points.append(x_next)
        values.append(float(f(x_next)))
        x = x_next

    steps_taken = len(subgradients)
    return Trajectory(
        points=np.array(points),
        subgradients=np.array(subgradients).reshape(steps_taken, f.dimension),
        steps=alphas[:steps_taken],
        values=np.array(values),
        policy=policy.value,
        seed=seed,
        schedule=schedule.spec,
        left_domain=left_domain,
        benchmark=f.name,
    )


def replay(x0: Sequence[float], subgradients: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Rebuild x_0..x_K from x0, the chosen subgradients and the steps by the same recurrence."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    points = [x]
    for v, alpha in zip(np.asarray(subgradients, dtype=float), np.asarray(steps, dtype=float)):
        x = x - alpha * v
        points.append(x)
    return np.array(points)


# ---------------------------------------------------------------------------
# Diameters
# ---------------------------------------------------------------------------


def _window(traj: Union[Trajectory, np.ndarray], a: int, b: Optional[int]) -> np.ndarray:
    points = traj.points if isinstance(traj, Trajectory) else np.atleast_2d(np.asarray(traj, dtype=float))
    last = len(points) - 1
    b = last if b is None else b
    if not 0 <= a <= b <= last:
        raise ValidationError(f"window [{a}, {b}] outside [0, {last}]", field="window")
    return points[a : b + 1]


def bounding_box_bounds(points: np.ndarray) -> Tuple[float, float]:
    """Lower and upper bounds on the diameter from the bounding box."""
    span = points.max(axis=0) - points.min(axis=0)
    return float(span.max()), float(np.linalg.norm(span))


def _reference_diameter(points: np.ndarray, chunk: int = 512) -> float:
    best = 0.0
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        d = np.linalg.norm(block[:, None, :] - points[None, start:, :], axis=2)
        best = max(best, float(d.max()))
    return best


def _extreme_points(points: np.ndarray) -> np.ndarray:
    """A subset containing every hull vertex (the farthest pair is among them)."""
    if len(points) <= 3:
        return points
    centered = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.count_nonzero(s > s[0] * 1e-12)) if s[0] > 0 else 0
    if rank == 0:
        return points[:1]
    coords = centered @ vt[:rank].T
    if rank == 1:
        return points[[int(coords[:, 0].argmin()), int(coords[:, 0].argmax())]]
    try:
        return points[ConvexHull(coords).vertices]
    except QhullError:
        return points


def diameter(traj: Union[Trajectory, np.ndarray], a: int = 0, b: Optional[int] = None) -> float:
    """diam(x_{⟦a,b⟧}): exact maximum pairwise distance over the window."""
    points = _window(traj, a, b)
    lower, upper = bounding_box_bounds(points)
    if upper == lower:
        return upper
    if points.shape[1] == 1:
        return lower
    if len(points) > DIAMETER_REFERENCE_LIMIT:
        points = _extreme_points(points)
    return _reference_diameter(points)


def tail_diameters(traj: Union[Trajectory, np.ndarray]) -> np.ndarray:
    """d_k = diam(x_{⟦k,K⟧}) for k = 0..K, computed backwards with a pruned candidate set."""
    points = traj.points if isinstance(traj, Trajectory) else np.atleast_2d(np.asarray(traj, dtype=float))
    n = len(points)
    out = np.zeros(n)
    if points.shape[1] == 1:
        x = points[:, 0]
        hi = np.maximum.accumulate(x[::-1])[::-1]
        lo = np.minimum.accumulate(x[::-1])[::-1]
        return hi - lo
    candidates = points[-1:]
    pending: List[np.ndarray] = []
    prune_at = 64
    current = 0.0
    for k in range(n - 2, -1, -1):
        x = points[k]
        reach = float(np.linalg.norm(candidates - x, axis=1).max())
        if pending:
            reach = max(reach, float(np.linalg.norm(np.array(pending) - x, axis=1).max()))
        current = max(current, reach)
        out[k] = current
        pending.append(x)
        if len(pending) + len(candidates) > prune_at:
            candidates = _extreme_points(np.vstack([candidates, np.array(pending)]))
            pending = []
            prune_at = max(64, 2 * len(candidates))
    return out


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    kind: str
    point: Optional[Tuple[float, ...]] = None
    amplitude: float = 0.0

    @property
    def label(self) -> str:
        if self.kind == "Oscillating":
            return f"Oscillating({self.amplitude:.6g})"
        return self.kind

    def to_dict(self):
        return {"kind": self.kind, "point": None if self.point is None else list(self.point), "amplitude": self.amplitude}


def verdict_window(K: int) -> int:
    return max(1, math.ceil(VERDICT_WINDOW_FRACTION * K))


def detect_convergence(traj: Trajectory, tol: float) -> Verdict:
    """
    ConvergedTo(x_K) when diam(x_{⟦K−w,K⟧}) < tol for the last 10% of indices, Oscillating
    with that amplitude otherwise; Truncated if the run left the box.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive", field="tol")
    final = tuple(float(v) for v in traj.final_point)
    if traj.left_domain:
        return Verdict("Truncated", final, 0.0)
    if traj.K == 0:
        return Verdict("ConvergedTo", final, 0.0)
    w = min(verdict_window(traj.K), traj.K)
    amplitude = diameter(traj, traj.K - w, traj.K)
    if amplitude < tol:
        return Verdict("ConvergedTo", final, amplitude)
    return Verdict("Oscillating", final, amplitude)


def critical_point_check(f: PiecewiseFunction, x: Sequence[float], tol: float = 1e-6, radius: float = 0.0) -> bool:
    """
    0 ∈ ∂f(x) up to tol. A positive radius admits every piece that attains the resolved value
    within 2·L·radius, certifying limits of runs still zig-zagging inside B(x, radius).
    """
    if not tol > 0:
        raise ValidationError("tol must be positive", field="tol")
    activity = max(ACTIVITY_TOL, 2.0 * f.lipschitz_bound * radius)
    S = clarke_subdifferential(f, np.asarray(x, dtype=float), tol=activity)
    return bool(np.linalg.norm(min_norm_subgradient(S)) <= tol)
