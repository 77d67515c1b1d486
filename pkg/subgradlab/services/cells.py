"""
L-regular cells: intervals, singletons, graphs and bands over lower cells, their inner
approximations M(t) and Monte-Carlo checks of the inclusion and quasiconvexity estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import structlog
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from subgradlab.core.config import (
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    MAX_CELL_DIMENSION,
    QUASICONVEX_NEIGHBORS,
    QUASICONVEX_SAMPLES,
)
from subgradlab.core.exceptions import DegenerateCell, DisconnectedSample, ValidationError
from subgradlab.services.piecewise import Polynomial

logger = structlog.get_logger(__name__)

_CLOUD_POINTS = 4000
_SEGMENT_CHECKS = 8
_QUASICONVEX_SOURCES = 64


@dataclass(frozen=True, eq=False)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValidationError("interval needs a < b", field="a")

    @property
    def ambient(self) -> int:
        return 1

    @property
    def dim(self) -> int:
        return 1

    def contains(self, points: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(points)[:, 0]
        return (x > self.a) & (x < self.b)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.a, self.b, size=(count, 1))

    def closure_sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.linspace(self.a, self.b, count)[:, None]

    def frontier_cloud(self) -> np.ndarray:
        return np.array([[self.a], [self.b]])

    def frontier_distance(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(points)[:, 0]
        d = np.minimum(np.abs(x - self.a), np.abs(self.b - x))
        return d, d

    def path(self, p: np.ndarray, q: np.ndarray, steps: int) -> np.ndarray:
        return p + np.linspace(0.0, 1.0, steps + 2)[:, None] * (q - p)


@dataclass(frozen=True, eq=False)
class Singleton:
    point: Tuple[float, ...]

    @property
    def ambient(self) -> int:
        return len(self.point)

    @property
    def dim(self) -> int:
        return 0

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all(np.isclose(np.atleast_2d(points), np.asarray(self.point)), axis=1)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.tile(np.asarray(self.point, dtype=float), (count, 1))

    def closure_sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.sample(rng, 1)

    def frontier_cloud(self) -> np.ndarray:
        return np.empty((0, self.ambient))

    def frontier_distance(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = len(np.atleast_2d(points))
        return np.ones(n), np.ones(n)

    def path(self, p: np.ndarray, q: np.ndarray, steps: int) -> np.ndarray:
        return np.tile(p, (steps + 2, 1))


class _CloudFrontier:
    """Frontier distance estimated against a dense boundary point cloud."""

    def _cloud_tree(self) -> Tuple[cKDTree, float]:
        cached = getattr(self, "_tree_cache", None)
        if cached is None:
            cloud = self.frontier_cloud()
            tree = cKDTree(cloud)
            gaps, _ = tree.query(cloud, k=2)
            # Half the largest nearest-neighbour gap bounds how far the cloud undershoots the true set.
            cached = (tree, float(gaps[:, 1].max()) / 2.0)
            object.__setattr__(self, "_tree_cache", cached)
        return cached

    def frontier_distance(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        tree, slack = self._cloud_tree()
        upper, _ = tree.query(np.atleast_2d(points))
        return np.maximum(upper - slack, 0.0), upper


@dataclass(frozen=True, eq=False)
class GraphCell(_CloudFrontier):
    """Graph of an L0-Lipschitz function ξ over a base cell."""

    base: "Cell"
    xi: Polynomial
    L0: float

    def __post_init__(self):
        if self.xi.dimension != self.base.ambient:
            raise ValidationError("graph map must be a function of the base coordinates", field="xi")
        if self.ambient > MAX_CELL_DIMENSION:
            raise ValidationError(f"cells are limited to R^{MAX_CELL_DIMENSION}", field="base")

    @property
    def ambient(self) -> int:
        return self.base.ambient + 1

    @property
    def dim(self) -> int:
        return self.base.dim

    def lift(self, base_points: np.ndarray) -> np.ndarray:
        return np.column_stack([base_points, self.xi(base_points)])

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        on_graph = np.abs(points[:, -1] - self.xi(points[:, :-1])) <= 1e-9
        return self.base.contains(points[:, :-1]) & on_graph

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.lift(self.base.sample(rng, count))

    def closure_sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.lift(self.base.closure_sample(rng, count))

    def frontier_cloud(self) -> np.ndarray:
        return self.lift(self.base.frontier_cloud())

    def path(self, p: np.ndarray, q: np.ndarray, steps: int) -> np.ndarray:
        return self.lift(self.base.path(p[:-1], q[:-1], steps))


@dataclass(frozen=True, eq=False)
class BandCell(_CloudFrontier):
    """Open band {(a, y) : ξ1(a) < y < ξ2(a)} over a base cell."""

    base: "Cell"
    xi1: Polynomial
    xi2: Polynomial
    L0: float

    def __post_init__(self):
        if self.xi1.dimension != self.base.ambient or self.xi2.dimension != self.base.ambient:
            raise ValidationError("band maps must be functions of the base coordinates", field="xi1")
        if self.ambient > MAX_CELL_DIMENSION:
            raise ValidationError(f"cells are limited to R^{MAX_CELL_DIMENSION}", field="base")
        probe = self.base.sample(np.random.default_rng(DEFAULT_SEED), 1000)
        if np.any(self.xi1(probe) >= self.xi2(probe)):
            raise ValidationError("band needs xi1 < xi2 strictly on the base", field="xi2")

    @property
    def ambient(self) -> int:
        return self.base.ambient + 1

    @property
    def dim(self) -> int:
        return self.base.dim + 1

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        a, y = points[:, :-1], points[:, -1]
        return self.base.contains(a) & (y > self.xi1(a)) & (y < self.xi2(a))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        a = self.base.sample(rng, count)
        lo, hi = self.xi1(a), self.xi2(a)
        return np.column_stack([a, lo + rng.uniform(size=count) * (hi - lo)])

    def closure_sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        a = self.base.closure_sample(rng, count)
        lo, hi = self.xi1(a), self.xi2(a)
        return np.column_stack([a, lo + rng.uniform(size=len(a)) * (hi - lo)])

    def frontier_cloud(self) -> np.ndarray:
        rng = np.random.default_rng(DEFAULT_SEED)
        a = self.base.closure_sample(rng, _CLOUD_POINTS)
        scale = max(self._height_scale(), 1e-12)
        walls = []
        for point in self.base.frontier_cloud():
            lo, hi = float(self.xi1(point)), float(self.xi2(point))
            heights = np.linspace(lo, hi, max(2, int(_CLOUD_POINTS * (hi - lo) / scale)))
            walls.append(np.column_stack([np.tile(point, (len(heights), 1)), heights]))
        pieces = [np.column_stack([a, self.xi1(a)]), np.column_stack([a, self.xi2(a)])] + walls
        return np.vstack(pieces)

    def _height_scale(self) -> float:
        a = self.base.closure_sample(np.random.default_rng(DEFAULT_SEED), 256)
        return float(np.max(self.xi2(a) - self.xi1(a)))

    def heights(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        a = points[:, :-1]
        lo, hi = self.xi1(a), self.xi2(a)
        return (points[:, -1] - lo) / (hi - lo)

    def path(self, p: np.ndarray, q: np.ndarray, steps: int) -> np.ndarray:
        base_path = self.base.path(p[:-1], q[:-1], steps)
        lam = np.linspace(self.heights(p)[0], self.heights(q)[0], len(base_path))
        lo, hi = self.xi1(base_path), self.xi2(base_path)
        return np.column_stack([base_path, lo + lam * (hi - lo)])


Cell = Union[Interval, Singleton, GraphCell, BandCell]


def frontier_distance(cell: Cell, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(lower, upper) estimates of the distance to the cell frontier."""
    return cell.frontier_distance(points)


# ---------------------------------------------------------------------------
# Inner approximations M(t)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShrinkParams:
    """Band thickness profile ξ2 − ξ1 ≥ c·d(·, ∂base)^κ."""

    c: float = 1.0
    kappa: float = 1.0


@dataclass(frozen=True, eq=False)
class ShrunkenCell:
    parent: Cell
    t: float
    base: Optional["ShrunkenCell"]
    beta: float
    rho: float
    theta: float
    kappa: float = 1.0
    c: float = 1.0
    bounds: Optional[Tuple[float, float]] = None
    base_scale: float = 1.0

    @property
    def radius(self) -> float:
        return self.rho * self.t**self.theta

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        cell = self.parent
        if isinstance(cell, Interval):
            lo, hi = self.bounds
            return (points[:, 0] > lo) & (points[:, 0] < hi)
        if isinstance(cell, GraphCell):
            return cell.contains(points) & self.base.contains(points[:, :-1])
        a, y = points[:, :-1], points[:, -1]
        return self.base.contains(a) & (y > cell.xi1(a) + self.beta) & (y < cell.xi2(a) - self.beta)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        cell = self.parent
        if isinstance(cell, Interval):
            lo, hi = self.bounds
            return rng.uniform(lo, hi, size=(count, 1))
        a = self.base.sample(rng, count)
        if isinstance(cell, GraphCell):
            return cell.lift(a)
        lo, hi = cell.xi1(a) + self.beta, cell.xi2(a) - self.beta
        return np.column_stack([a, lo + rng.uniform(size=count) * (hi - lo)])

    def summary(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "base_scale": self.base_scale,
            "beta": self.beta,
            "rho": self.rho,
            "theta": self.theta,
            "radius": self.radius,
        }


def shrink_cell(cell: Cell, t: float, params: Optional[ShrinkParams] = None) -> ShrunkenCell:
    """
    Build the inner approximation M(t) of an L-regular cell.

    Intervals shrink by t at both ends. Graph cells shrink the base by t/√(2+L0²); band cells
    additionally inset the fibres by β(t) = (c/2)(ϱ′)^κ (t/√(2+L0²))^{θ′κ}, where (ϱ′, θ′) come
    from the shrunken base.

    Raises:
        ValidationError: t outside (0, 1], or the band violates its thickness profile
        DegenerateCell: The shrunken cell is empty
    """
    if not 0 < t <= 1:
        raise ValidationError("t must lie in (0, 1]", field="t")
    params = params or ShrinkParams()

    if isinstance(cell, Interval):
        lo, hi = cell.a + t, cell.b - t
        if lo >= hi:
            raise DegenerateCell(f"interval ({cell.a}, {cell.b}) is empty after shrinking by {t}", details={"t": t})
        return ShrunkenCell(cell, t, None, 0.0, 1.0, 1.0, bounds=(lo, hi))

    if isinstance(cell, Singleton):
        raise ValidationError("a singleton has no inner approximation", field="cell")

    spread = math.sqrt(2.0 + cell.L0**2)
    s = t / spread
    base = shrink_cell(cell.base, s, params)

    if isinstance(cell, GraphCell):
        return ShrunkenCell(cell, t, base, 0.0, base.rho / spread**base.theta, base.theta, base_scale=s)

    rng = np.random.default_rng(DEFAULT_SEED)
    probe = cell.base.sample(rng, 2000)
    thickness = cell.xi2(probe) - cell.xi1(probe)
    floor = params.c * cell.base.frontier_distance(probe)[1] ** params.kappa
    if np.any(thickness < floor - 1e-12):
        raise ValidationError("band thickness is below c·d^κ on base samples; lower c or raise κ", field="c")

    beta = 0.5 * params.c * base.rho**params.kappa * s ** (base.theta * params.kappa)
    inner = base.sample(rng, 2000)
    if np.any(cell.xi1(inner) + beta >= cell.xi2(inner) - beta):
        raise DegenerateCell(
            "shrunken band is empty somewhere on the base; (c, κ) are invalid",
            details={"t": t, "beta": beta},
        )
    # t ≤ 1 and θ ≥ θ′κ, θ′ so both clearances dominate ϱ t^θ with ϱ free of t
    theta = base.theta * max(params.kappa, 1.0)
    inset_rho = 0.5 * params.c * base.rho**params.kappa / spread ** (base.theta * params.kappa)
    rho = min(inset_rho / math.sqrt(1.0 + cell.L0**2), base.rho / spread**base.theta)
    return ShrunkenCell(cell, t, base, beta, rho, theta, params.kappa, params.c, base_scale=s)


def inflate_margin(shrunken: ShrunkenCell, factor: float = 10.0) -> ShrunkenCell:
    """Claim a larger clearance radius than the construction guarantees (negative control)."""
    cell = shrunken.parent
    if isinstance(cell, BandCell):
        radius = min(factor * shrunken.beta / math.sqrt(1.0 + cell.L0**2), shrunken.base.radius)
    else:
        radius = factor * shrunken.radius
    return replace(shrunken, rho=radius / shrunken.t**shrunken.theta)


def inflate_inset(shrunken: ShrunkenCell, factor: float = 10.0) -> ShrunkenCell:
    """Apply a larger fibre inset than the construction prescribes (negative control)."""
    return replace(shrunken, beta=factor * shrunken.beta)


def verify_inclusions(
    cell: Cell,
    shrunken: ShrunkenCell,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> Dict[str, Any]:
    """
    Monte-Carlo check of M∖B(∂M, t) ⊂ M(t) ⊂ M∖B(∂M, ϱt^θ).

    Frontier distances come as (lower, upper) estimates; a sample counts as a violation only
    when the estimate proves it, so cloud resolution never produces false alarms.
    """
    if samples < 1:
        raise ValidationError("samples must be at least 1", field="samples")
    rng = np.random.default_rng(seed)

    outer = cell.sample(rng, samples)
    lower, _ = cell.frontier_distance(outer)
    deep = lower >= shrunken.t
    missed = deep & ~shrunken.contains(outer)
    violations_left = int(np.count_nonzero(missed))
    worst_left = float(np.max(lower[missed] - shrunken.t)) if violations_left else 0.0

    inner = shrunken.sample(rng, samples)
    _, upper = cell.frontier_distance(inner)
    margins = upper - shrunken.radius
    violations_right = int(np.count_nonzero(margins < 0))

    report = {
        "violations_left": violations_left,
        "violations_right": violations_right,
        "worst_left_margin": worst_left,
        "worst_right_margin": float(margins.min()),
        "samples": samples,
        "seed": seed,
        "shrunken": shrunken.summary(),
        "passed": violations_left == 0 and violations_right == 0,
    }
    logger.info("inclusions verified", left=violations_left, right=violations_right, t=shrunken.t)
    return report


# ---------------------------------------------------------------------------
# Quasiconvexity
# ---------------------------------------------------------------------------


def _segment_inside(cell: Cell, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorized straight-segment containment for arrays of endpoint pairs."""
    lam = np.linspace(0.0, 1.0, _SEGMENT_CHECKS + 2)[1:-1]
    inside = np.ones(len(p), dtype=bool)
    for s in lam:
        inside &= cell.contains(p + s * (q - p))
    return inside


def _path_length(path: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum())


def quasiconvexity_estimate(
    cell: Cell,
    samples: int = QUASICONVEX_SAMPLES,
    seed: int = DEFAULT_SEED,
    neighbors: int = QUASICONVEX_NEIGHBORS,
) -> float:
    """
    Upper estimate of the quasiconvexity constant: max over sampled pairs of in-cell path length
    over Euclidean distance, on a k-nearest-neighbour graph of interior samples.

    Raises:
        DisconnectedSample: The in-cell neighbour graph has several components
    """
    if cell.ambient > MAX_CELL_DIMENSION:
        raise ValidationError(f"cells are limited to R^{MAX_CELL_DIMENSION}", field="cell")
    rng = np.random.default_rng(seed)
    pts = cell.sample(rng, samples)
    n = len(pts)
    k = min(neighbors, n - 1)
    _, nbr = cKDTree(pts).query(pts, k=k + 1)

    rows = np.repeat(np.arange(n), k)
    cols = nbr[:, 1:].ravel()
    straight = _segment_inside(cell, pts[rows], pts[cols])
    weights = np.linalg.norm(pts[rows] - pts[cols], axis=1)
    for index in np.flatnonzero(~straight):
        weights[index] = _path_length(cell.path(pts[rows[index]], pts[cols[index]], _SEGMENT_CHECKS))

    sources = np.arange(min(_QUASICONVEX_SOURCES, n))
    src_rows = np.repeat(sources, n)
    src_cols = np.tile(np.arange(n), len(sources))
    keep = src_rows != src_cols
    src_rows, src_cols = src_rows[keep], src_cols[keep]
    visible = _segment_inside(cell, pts[src_rows], pts[src_cols])
    src_rows, src_cols = src_rows[visible], src_cols[visible]

    all_rows = np.concatenate([rows, src_rows])
    all_cols = np.concatenate([cols, src_cols])
    all_w = np.concatenate([weights, np.linalg.norm(pts[src_rows] - pts[src_cols], axis=1)])
    positive = all_w > 0
    graph = coo_matrix((all_w[positive], (all_rows[positive], all_cols[positive])), shape=(n, n)).tocsr()

    components, _ = connected_components(graph, directed=False)
    if components > 1:
        raise DisconnectedSample(components, details={"samples": n})

    dist = dijkstra(graph, directed=False, indices=sources)
    euclid = np.linalg.norm(pts[sources][:, None, :] - pts[None, :, :], axis=2)
    mask = euclid > 1e-12
    ratio = float(np.max(dist[mask] / euclid[mask]))
    logger.info("quasiconvexity estimated", samples=n, ratio=ratio)
    return max(ratio, 1.0)
