"""
Declarative stratification geometry.

Strata are declared (never computed) and validated by sampling. Each stratum carries a shape
with closed-form or Gauss-Newton projection, tangent/normal projectors and a sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from subgradlab.core.config import (
    DEFAULT_SEED,
    DISJOINT_TOL,
    FRONTIER_TOL,
    MEMBERSHIP_TOL,
    PROJECTION_AMBIGUITY,
    PROJECTION_MAX_STEPS,
    PROJECTION_RESTARTS,
    PROJECTION_STATIONARITY,
    W_FIT_C_CAP,
)
from subgradlab.core.exceptions import NoSamplePairs, OutsideTube, ValidationError
from subgradlab.services.piecewise import Polynomial

logger = structlog.get_logger(__name__)

_BOUND_CAP = 1e6


def _frozen(array: Any, ndim: int = 1) -> np.ndarray:
    arr = np.array(array, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


def _bounds_to_document(values: np.ndarray) -> List[Optional[float]]:
    return [None if not np.isfinite(v) else float(v) for v in values]


def _bounds_from_document(values: Sequence[Optional[float]], sign: float) -> np.ndarray:
    return np.array([sign * np.inf if v is None else float(v) for v in values], dtype=float)


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Point:
    """Zero-dimensional stratum {p}."""

    point: np.ndarray

    kind = "point"

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen(self.point))

    @property
    def ambient(self) -> int:
        return int(self.point.shape[0])

    @property
    def dim(self) -> int:
        return 0

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.point.copy()

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(points) - self.point, axis=1)

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.linalg.norm(np.asarray(x) - self.point) <= tol)

    def tangent_projector(self, y: np.ndarray) -> np.ndarray:
        return np.zeros((self.ambient, self.ambient))

    def sample(self, rng: np.random.Generator, count: int, box: np.ndarray) -> np.ndarray:
        return np.tile(self.point, (count, 1))

    def to_document(self) -> Dict[str, Any]:
        return {"kind": self.kind, "point": self.point.tolist()}


@dataclass(frozen=True, eq=False)
class AffinePatch:
    """base + span(basis rows), restricted to a box in the local (orthonormal) coordinates."""

    base: np.ndarray
    basis: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    kind = "affine"

    def __post_init__(self):
        basis = _frozen(self.basis, ndim=2)
        object.__setattr__(self, "base", _frozen(self.base))
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        deviation = float(np.abs(basis @ basis.T - np.eye(basis.shape[0])).max())
        if deviation > 1e-12:
            raise ValidationError(f"affine basis is not orthonormal (deviation {deviation:.2e})", field="basis")
        if self.lower.shape[0] != basis.shape[0] or np.any(self.lower >= self.upper):
            raise ValidationError("affine membership box must have lower < upper per basis vector", field="lower")

    @classmethod
    def line(cls, base: Sequence[float], direction: Sequence[float], lower=-np.inf, upper=np.inf) -> "AffinePatch":
        d = np.asarray(direction, dtype=float)
        return cls(np.asarray(base, dtype=float), d[None, :] / np.linalg.norm(d), [lower], [upper])

    @property
    def ambient(self) -> int:
        return int(self.base.shape[0])

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    def local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.base) @ self.basis.T

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.base + np.clip(self.local(x), self.lower, self.upper) @ self.basis

    def distances(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        nearest = self.base + np.clip(self.local(points), self.lower, self.upper) @ self.basis
        return np.linalg.norm(points - nearest, axis=1)

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        u = self.local(x)
        inside = bool(np.all(u > self.lower) and np.all(u < self.upper))
        return inside and float(self.distances(x)[0]) <= tol

    def tangent_projector(self, y: np.ndarray) -> np.ndarray:
        return self.basis.T @ self.basis

    def sample(self, rng: np.random.Generator, count: int, box: np.ndarray) -> np.ndarray:
        center = box.mean(axis=1)
        reach = float(np.linalg.norm(box[:, 1] - box[:, 0]) / 2 + np.linalg.norm(self.base - center))
        u_center = self.local(center)
        lo = np.maximum(self.lower, u_center - reach)
        hi = np.minimum(self.upper, u_center + reach)
        return _rejection(lambda m: self.base + rng.uniform(lo, hi, size=(m, self.dim)) @ self.basis, box, count)

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "base": self.base.tolist(),
            "basis": self.basis.tolist(),
            "lower": _bounds_to_document(self.lower),
            "upper": _bounds_to_document(self.upper),
        }


@dataclass(frozen=True, eq=False)
class Graph:
    """Graph {(a, ξ(a)) : a in the open domain box} of a polynomial map ξ: ℝᵏ → ℝ^{n−k}."""

    lower: np.ndarray
    upper: np.ndarray
    maps: Tuple[Polynomial, ...]
    lipschitz: float
    _jacobian: Tuple[Tuple[Polynomial, ...], ...] = field(init=False, repr=False)

    kind = "graph"

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "maps", tuple(self.maps))
        if np.any(self.lower >= self.upper) or not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ValidationError("graph domain must be a bounded box with lower < upper", field="lower")
        if any(p.dimension != self.dim for p in self.maps):
            raise ValidationError("graph maps must be functions of the domain coordinates", field="maps")
        jac = tuple(tuple(p.derivative(j) for j in range(self.dim)) for p in self.maps)
        object.__setattr__(self, "_jacobian", jac)

    @property
    def dim(self) -> int:
        return int(self.lower.shape[0])

    @property
    def ambient(self) -> int:
        return self.dim + len(self.maps)

    def xi(self, a: np.ndarray) -> np.ndarray:
        return np.stack([p(a) for p in self.maps], axis=-1)

    def lift(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.concatenate([a, self.xi(a)], axis=-1)

    def map_jacobian(self, a: np.ndarray) -> np.ndarray:
        return np.array([[float(d(a)) for d in row] for row in self._jacobian])

    def frame(self, a: np.ndarray) -> np.ndarray:
        """Columns spanning the tangent space at (a, ξ(a))."""
        return np.vstack([np.eye(self.dim), self.map_jacobian(a)])

    def _gauss_newton(self, x: np.ndarray, a0: np.ndarray) -> Tuple[np.ndarray, bool]:
        # Damped Gauss-Newton with Armijo backtracking, projected onto the closed domain box.
        a = np.clip(a0, self.lower, self.upper)
        for _ in range(PROJECTION_MAX_STEPS):
            r = self.lift(a) - x
            J = self.frame(a)
            grad = J.T @ r
            projected_grad = a - np.clip(a - grad, self.lower, self.upper)
            if np.linalg.norm(projected_grad) <= PROJECTION_STATIONARITY:
                return a, True
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
            phi = 0.5 * float(r @ r)
            step = 1.0
            while step > 1e-12:
                candidate = np.clip(a + step * delta, self.lower, self.upper)
                r_new = self.lift(candidate) - x
                if 0.5 * float(r_new @ r_new) <= phi + 1e-4 * step * float(grad @ delta):
                    break
                step *= 0.5
            else:
                return a, False
            a = candidate
        r = self.lift(a) - x
        projected_grad = a - np.clip(a - self.frame(a).T @ r, self.lower, self.upper)
        return a, bool(np.linalg.norm(projected_grad) <= PROJECTION_STATIONARITY)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rng = np.random.default_rng(DEFAULT_SEED)
        starts = [x[: self.dim]] + [rng.uniform(self.lower, self.upper) for _ in range(PROJECTION_RESTARTS)]
        candidates = []
        for index, start in enumerate(starts):
            a, converged = self._gauss_newton(x, start)
            if converged:
                candidates.append(self.lift(a))
            elif index == 0 and len(starts) == 1:
                break
        if not candidates:
            raise OutsideTube("Gauss-Newton projection did not converge", details={"point": x.tolist()})
        dists = np.array([np.linalg.norm(c - x) for c in candidates])
        best = int(np.argmin(dists))
        for c, d in zip(candidates, dists):
            if d - dists[best] <= PROJECTION_AMBIGUITY and np.linalg.norm(c - candidates[best]) > PROJECTION_AMBIGUITY:
                raise OutsideTube(
                    "projection is ambiguous: restarts reach distinct nearest points",
                    details={"point": x.tolist(), "distance": float(dists[best])},
                )
        return candidates[best]

    def grid_distance(self, x: np.ndarray) -> float:
        per_axis = 2001 if self.dim == 1 else int(round(40000 ** (1.0 / self.dim)))
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(self.lower, self.upper)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return float(np.linalg.norm(self.lift(grid) - x, axis=1).min())

    def distances(self, points: np.ndarray) -> np.ndarray:
        out = []
        for x in np.atleast_2d(points):
            try:
                out.append(float(np.linalg.norm(self.project(x) - x)))
            except OutsideTube:
                out.append(self.grid_distance(x))
        return np.array(out)

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        a = x[: self.dim]
        inside = bool(np.all(a > self.lower) and np.all(a < self.upper))
        return inside and float(np.linalg.norm(x[self.dim :] - self.xi(a))) <= tol

    def tangent_projector(self, y: np.ndarray) -> np.ndarray:
        J = self.frame(np.asarray(y, dtype=float)[: self.dim])
        return J @ np.linalg.solve(J.T @ J, J.T)

    def sample(self, rng: np.random.Generator, count: int, box: np.ndarray) -> np.ndarray:
        return _rejection(lambda m: self.lift(rng.uniform(self.lower, self.upper, size=(m, self.dim))), box, count)

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "maps": [p.to_document() for p in self.maps],
            "lipschitz": self.lipschitz,
        }


@dataclass(frozen=True, eq=False)
class Sphere:
    """Round hypersurface |x − center| = radius."""

    center: np.ndarray
    radius: float

    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center))
        if self.radius <= 0:
            raise ValidationError("sphere radius must be positive", field="radius")

    @property
    def ambient(self) -> int:
        return int(self.center.shape[0])

    @property
    def dim(self) -> int:
        return self.ambient - 1

    def project(self, x: np.ndarray) -> np.ndarray:
        offset = np.asarray(x, dtype=float) - self.center
        norm = float(np.linalg.norm(offset))
        if norm == 0.0:
            raise OutsideTube("the center is equidistant from every point of the sphere", details={"point": list(x)})
        return self.center + self.radius * offset / norm

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(np.atleast_2d(points) - self.center, axis=1) - self.radius)

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(self.distances(x)[0] <= tol)

    def tangent_projector(self, y: np.ndarray) -> np.ndarray:
        u = np.asarray(y, dtype=float) - self.center
        u /= np.linalg.norm(u)
        return np.eye(self.ambient) - np.outer(u, u)

    def sample(self, rng: np.random.Generator, count: int, box: np.ndarray) -> np.ndarray:
        def draw(m):
            g = rng.standard_normal((m, self.ambient))
            return self.center + self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)

        return _rejection(draw, box, count)

    def to_document(self) -> Dict[str, Any]:
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class OpenRegion:
    """Full-dimensional stratum {x : p_j(x) < 0 for all j} inside the ambient box."""

    inequalities: Tuple[Polynomial, ...]
    ambient_dimension: int

    kind = "open"

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        if any(p.dimension != self.ambient_dimension for p in self.inequalities):
            raise ValidationError("open-region inequalities must live in the ambient space", field="inequalities")

    @property
    def ambient(self) -> int:
        return self.ambient_dimension

    @property
    def dim(self) -> int:
        return self.ambient_dimension

    def levels(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if not self.inequalities:
            return np.full(points.shape[0], -np.inf)
        return np.max(np.stack([p(points) for p in self.inequalities]), axis=0)

    def in_closure(self, points: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        return self.levels(points) <= tol

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(self.levels(x)[0] < 0.0)

    def tangent_projector(self, y: np.ndarray) -> np.ndarray:
        return np.eye(self.ambient)

    def sample(self, rng: np.random.Generator, count: int, box: np.ndarray) -> np.ndarray:
        def draw(m):
            pts = rng.uniform(box[:, 0], box[:, 1], size=(m, self.ambient))
            return pts[self.levels(pts) < 0.0]

        return _rejection(draw, box, count)

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "dimension": self.ambient_dimension,
            "inequalities": [p.to_document() for p in self.inequalities],
        }


Shape = Union[Point, AffinePatch, Graph, Sphere, OpenRegion]


def _rejection(draw, box: np.ndarray, count: int, max_rounds: int = 50) -> np.ndarray:
    kept: List[np.ndarray] = []
    total = 0
    batch = max(count, 16)
    for _ in range(max_rounds):
        pts = np.atleast_2d(draw(batch))
        if pts.size:
            pts = pts[np.all((pts >= box[:, 0]) & (pts <= box[:, 1]), axis=1)]
            kept.append(pts)
            total += len(pts)
        if total >= count:
            break
    if total == 0:
        raise ValidationError("stratum does not meet the ambient box", field="box")
    return np.vstack(kept)[:count]


# ---------------------------------------------------------------------------
# Strata and stratifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Stratum:
    id: int
    shape: Shape
    frontier_ids: Tuple[int, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frontier_ids", tuple(int(j) for j in self.frontier_ids))

    @property
    def dim(self) -> int:
        return self.shape.dim

    @property
    def ambient(self) -> int:
        return self.shape.ambient

    @property
    def is_open(self) -> bool:
        return self.dim == self.ambient

    def tangent_projector(self, y: np.ndarray) -> np.ndarray:
        return self.shape.tangent_projector(np.asarray(y, dtype=float))

    def normal_projector(self, y: np.ndarray) -> np.ndarray:
        return np.eye(self.ambient) - self.tangent_projector(y)

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.shape.contains(np.asarray(x, dtype=float), tol)

    def to_document(self) -> Dict[str, Any]:
        return {"id": self.id, "label": self.label, "frontier_ids": list(self.frontier_ids), "shape": self.shape.to_document()}


@dataclass(frozen=True, eq=False)
class Stratification:
    strata: Tuple[Stratum, ...]
    ambient_box: np.ndarray
    _index: Dict[int, Stratum] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "strata", tuple(self.strata))
        object.__setattr__(self, "ambient_box", _frozen(self.ambient_box, ndim=2))
        index = {s.id: s for s in self.strata}
        if len(index) != len(self.strata):
            raise ValidationError("stratum ids must be unique", field="strata")
        for s in self.strata:
            if s.ambient != self.dimension:
                raise ValidationError(f"stratum {s.id} lives in R^{s.ambient}, box is R^{self.dimension}", field="strata")
            for j in s.frontier_ids:
                if j not in index:
                    raise ValidationError(f"stratum {s.id} names unknown frontier stratum {j}", field="frontier_ids")
                if index[j].dim >= s.dim:
                    raise ValidationError(
                        f"frontier stratum {j} of {s.id} must have lower dimension", field="frontier_ids"
                    )
        object.__setattr__(self, "_index", index)

    @property
    def dimension(self) -> int:
        return int(self.ambient_box.shape[0])

    def __getitem__(self, stratum_id: int) -> Stratum:
        try:
            return self._index[stratum_id]
        except KeyError:
            raise ValidationError(f"unknown stratum id {stratum_id}", field="stratum_id") from None

    def __iter__(self):
        return iter(self.strata)

    def __len__(self) -> int:
        return len(self.strata)

    @property
    def ids(self) -> List[int]:
        return [s.id for s in self.strata]

    def non_open(self) -> List[Stratum]:
        return [s for s in self.strata if not s.is_open]

    def by_dimension(self) -> List[Stratum]:
        return sorted(self.strata, key=lambda s: (s.dim, s.id))

    def containing(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> List[int]:
        return [s.id for s in self.strata if s.contains(x, tol)]

    def distances(self, points: np.ndarray, stratum_id: int) -> np.ndarray:
        """Euclidean distances from each point to the stratum (equivalently its closure)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        M = self[stratum_id]
        if isinstance(M.shape, OpenRegion):
            inside = M.shape.in_closure(points)
            out = np.zeros(len(points))
            if not np.all(inside):
                outside = points[~inside]
                if not M.frontier_ids:
                    raise ValidationError(
                        f"open stratum {M.id} has no frontier strata to measure outside distance", field="frontier_ids"
                    )
                out[~inside] = np.min([self.distances(outside, j) for j in M.frontier_ids], axis=0)
            return out
        return M.shape.distances(points)

    def distance(self, x: np.ndarray, stratum_id: int) -> float:
        return float(self.distances(x, stratum_id)[0])

    def frontier_distances(self, points: np.ndarray, stratum_id: int) -> np.ndarray:
        M = self[stratum_id]
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not M.frontier_ids:
            return np.ones(len(points))
        return np.min([self.distances(points, j) for j in M.frontier_ids], axis=0)

    def project(self, x: np.ndarray, stratum_id: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        M = self[stratum_id]
        if isinstance(M.shape, OpenRegion):
            if M.shape.in_closure(x)[0]:
                return x.copy()
            nearest = min(M.frontier_ids, key=lambda j: self.distance(x, j))
            return self.project(x, nearest)
        return M.shape.project(x)

    def sample(self, stratum_id: int, rng: np.random.Generator, count: int) -> np.ndarray:
        return self[stratum_id].shape.sample(rng, count, np.asarray(self.ambient_box))

    def to_document(self) -> Dict[str, Any]:
        return {"ambient_box": self.ambient_box.tolist(), "strata": [s.to_document() for s in self.strata]}


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def project(M: Stratum, x: np.ndarray, strat: Optional[Stratification] = None) -> np.ndarray:
    """Nearest point of M to x."""
    if isinstance(M.shape, OpenRegion):
        if strat is None:
            if M.shape.in_closure(x)[0]:
                return np.asarray(x, dtype=float).copy()
            raise ValidationError("projection onto an open stratum from outside needs its stratification", field="strat")
        return strat.project(x, M.id)
    return M.shape.project(np.asarray(x, dtype=float))


def distance(x: np.ndarray, M: Stratum, strat: Optional[Stratification] = None) -> float:
    """Euclidean distance from x to M."""
    if strat is not None:
        return strat.distance(x, M.id)
    if isinstance(M.shape, OpenRegion):
        if M.shape.in_closure(x)[0]:
            return 0.0
        raise ValidationError("distance to an open stratum from outside needs its stratification", field="strat")
    return float(M.shape.distances(np.asarray(x, dtype=float))[0])


def distance_to_frontier(y: np.ndarray, M: Stratum, strat: Stratification) -> float:
    """Distance to the union of frontier strata; 1 for frontier-free strata."""
    return float(strat.frontier_distances(y, M.id)[0])


def tangent_projector(M: Stratum, y: np.ndarray) -> np.ndarray:
    return M.tangent_projector(y)


def normal_projector(M: Stratum, y: np.ndarray) -> np.ndarray:
    return M.normal_projector(y)


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------


def shape_from_document(doc: Mapping[str, Any], ambient: int) -> Shape:
    kind = doc.get("kind")
    if kind == "point":
        return Point(np.asarray(doc["point"], dtype=float))
    if kind == "affine":
        return AffinePatch(
            np.asarray(doc["base"], dtype=float),
            np.asarray(doc["basis"], dtype=float),
            _bounds_from_document(doc["lower"], -1.0),
            _bounds_from_document(doc["upper"], 1.0),
        )
    if kind == "graph":
        k = len(doc["lower"])
        return Graph(
            np.asarray(doc["lower"], dtype=float),
            np.asarray(doc["upper"], dtype=float),
            tuple(Polynomial.from_document(m, k) for m in doc["maps"]),
            float(doc["lipschitz"]),
        )
    if kind == "sphere":
        return Sphere(np.asarray(doc["center"], dtype=float), float(doc["radius"]))
    if kind == "open":
        return OpenRegion(tuple(Polynomial.from_document(p, ambient) for p in doc["inequalities"]), ambient)
    raise ValidationError(f"unknown shape kind {kind!r}", field="shape")


def stratification_from_document(doc: Mapping[str, Any]) -> Stratification:
    """Validate the envelope with the pydantic schema, then build shapes."""
    from subgradlab.schemas.documents import StratificationDocument

    envelope = StratificationDocument.model_validate(doc)
    ambient = len(envelope.ambient_box)
    strata = tuple(
        Stratum(s.id, shape_from_document(s.shape, ambient), tuple(s.frontier_ids), s.label) for s in envelope.strata
    )
    return Stratification(strata, np.asarray(envelope.ambient_box, dtype=float))


# ---------------------------------------------------------------------------
# Sampling-based validation
# ---------------------------------------------------------------------------


def check_graph_lipschitz(shape: Graph, pairs: int, rng: np.random.Generator) -> Tuple[bool, float]:
    a = rng.uniform(shape.lower, shape.upper, size=(pairs, shape.dim))
    b = rng.uniform(shape.lower, shape.upper, size=(pairs, shape.dim))
    gap = np.linalg.norm(a - b, axis=1)
    ratio = np.linalg.norm(shape.xi(a) - shape.xi(b), axis=1) / np.where(gap > 0, gap, np.inf)
    worst = float(ratio.max())
    return worst <= shape.lipschitz * (1 + 1e-12), worst


def check_frontier_condition(strat: Stratification, samples: int, rng: np.random.Generator) -> Dict[str, Any]:
    """If closure(M_i) meets M_j then M_j lies in closure(M_i) and j is a declared frontier stratum of i."""
    violations = []
    for Mj in strat:
        ys = strat.sample(Mj.id, rng, samples)
        for Mi in strat:
            if Mi.id == Mj.id:
                continue
            near = strat.distances(ys, Mi.id) <= FRONTIER_TOL
            declared = Mj.id in Mi.frontier_ids
            if declared and not np.all(near):
                violations.append({"i": Mi.id, "j": Mj.id, "reason": "declared frontier stratum leaves the closure"})
            elif not declared and np.any(near):
                reason = "partial contact" if not np.all(near) else "undeclared frontier stratum"
                violations.append({"i": Mi.id, "j": Mj.id, "reason": reason})
    return {"passed": not violations, "violations": violations}


def check_disjoint(strat: Stratification, samples: int, rng: np.random.Generator) -> Dict[str, Any]:
    """Open regions must not overlap; lower strata must not meet each other."""
    overlaps = []
    box = np.asarray(strat.ambient_box)
    ambient = rng.uniform(box[:, 0], box[:, 1], size=(samples, strat.dimension))
    regions = [s for s in strat if isinstance(s.shape, OpenRegion)]
    for index, a in enumerate(regions):
        inside_a = a.shape.levels(ambient) < -DISJOINT_TOL
        for b in regions[index + 1 :]:
            both = int(np.count_nonzero(inside_a & (b.shape.levels(ambient) < -DISJOINT_TOL)))
            if both:
                overlaps.append({"a": a.id, "b": b.id, "count": both})
    lower = strat.non_open()
    for index, a in enumerate(lower):
        pts = strat.sample(a.id, rng, min(samples, 200))
        for b in lower[index + 1 :]:
            if b.dim != a.dim:
                continue
            hits = int(np.count_nonzero([b.contains(p, DISJOINT_TOL) for p in pts]))
            if hits:
                overlaps.append({"a": a.id, "b": b.id, "count": hits})
    return {"passed": not overlaps, "overlaps": overlaps}


def check_projectors(strat: Stratification, samples: int, rng: np.random.Generator) -> Dict[str, Any]:
    """P_T idempotent and symmetric with operator norm at most 1, and P_T + P_N = I."""
    worst = 0.0
    for M in strat:
        for y in strat.sample(M.id, rng, min(samples, 50)):
            P = M.tangent_projector(y)
            N = M.normal_projector(y)
            worst = max(
                worst,
                float(np.abs(P @ P - P).max()),
                float(np.abs(P - P.T).max()),
                max(0.0, float(np.linalg.norm(P, 2)) - 1.0),
                float(np.abs(P + N - np.eye(strat.dimension)).max()),
            )
    return {"passed": worst <= 1e-10, "worst_deviation": worst}


def check_projection_optimality(strat: Stratification, samples: int, rng: np.random.Generator) -> Dict[str, Any]:
    """Projected points are no farther than any sampled point of the stratum."""
    failures = []
    for M in strat.non_open():
        members = strat.sample(M.id, rng, min(samples, 1000))
        queries = members[: min(len(members), 25)] + rng.normal(scale=0.05, size=(min(len(members), 25), strat.dimension))
        for x in queries:
            try:
                p = M.shape.project(x)
            except OutsideTube:
                continue
            best = float(np.linalg.norm(members - x, axis=1).min())
            if np.linalg.norm(p - x) > best + 1e-9:
                failures.append({"stratum": M.id, "point": x.tolist()})
    return {"passed": not failures, "failures": failures}


def check_projection_lipschitz(
    strat: Stratification,
    stratum_id: int,
    radius: float,
    tube: float,
    lipschitz: float,
    pairs: int = 1000,
    seed: int = DEFAULT_SEED,
) -> Dict[str, Any]:
    """|P(x) − P(y)| ≤ L|x − y| for pairs near M within `radius` of a sampled base point and `tube` of M."""
    rng = np.random.default_rng(seed)
    M = strat[stratum_id]
    anchors = strat.sample(stratum_id, rng, pairs)
    worst = 0.0
    tested = 0
    for anchor in anchors:
        x = anchor + rng.normal(size=strat.dimension) * radius / (2 * math.sqrt(strat.dimension))
        y = anchor + rng.normal(size=strat.dimension) * radius / (2 * math.sqrt(strat.dimension))
        try:
            px, py = project(M, x, strat), project(M, y, strat)
        except OutsideTube:
            continue
        if np.linalg.norm(x - px) >= tube or np.linalg.norm(y - py) >= tube:
            continue
        gap = float(np.linalg.norm(x - y))
        if gap > 0:
            tested += 1
            worst = max(worst, float(np.linalg.norm(px - py)) / gap)
    return {"passed": worst <= lipschitz * (1 + 1e-9), "worst_ratio": worst, "pairs_tested": tested, "lipschitz": lipschitz}


@dataclass(frozen=True)
class WConditionFit:
    """Constants with |P_N(x) P_T(y)| ≤ C·|x − y| / d(y, ∂M_j)^η on every retained pair."""

    i: int
    j: int
    C: float
    eta: float
    sample_count: int
    max_violation: float

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _w_pairs(strat: Stratification, i: int, j: int, samples: int, rng: np.random.Generator):
    Mi, Mj = strat[i], strat[j]
    xs = strat.sample(i, rng, samples)
    ys = strat.sample(j, rng, len(xs))
    # First half pairs x with its nearest point on M_j, second half with an independent sample.
    for k in range(len(xs) // 2):
        try:
            ys[k] = Mj.shape.project(xs[k])
        except OutsideTube:
            pass

    ratios, gaps, frontier = [], [], []
    fd = strat.frontier_distances(ys, j)
    for x, y, d_y in zip(xs, ys, fd):
        gap = float(np.linalg.norm(x - y))
        if gap <= 1e-12 or d_y <= 1e-12:
            continue
        product = Mi.normal_projector(x) @ Mj.tangent_projector(y)
        ratios.append(float(np.linalg.norm(product, 2)))
        gaps.append(gap)
        frontier.append(float(d_y))
    return np.array(ratios), np.array(gaps), np.array(frontier)


def estimate_w_constants(
    strat: Stratification,
    i: int,
    j: int,
    samples: int = 2000,
    seed: int = DEFAULT_SEED,
) -> WConditionFit:
    """
    Fit (C, η) of the (w)-condition between M_i and a frontier stratum M_j.

    η is the smallest value on {0, 0.25, ..., 4}, refined once on a 0.025 grid below it, whose
    envelope constant C stays under the cap; C is then the tightest constant at that η.

    Raises:
        ValidationError: M_j is not a declared frontier stratum of M_i
        NoSamplePairs: Fewer than 10 usable pairs
    """
    if j not in strat[i].frontier_ids:
        raise ValidationError(f"stratum {j} is not in the frontier of {i}", field="j")
    rng = np.random.default_rng(seed)
    ratios, gaps, frontier = _w_pairs(strat, i, j, samples, rng)
    if len(ratios) < 10:
        raise NoSamplePairs(len(ratios), 10, details={"i": i, "j": j})

    def envelope(eta: float) -> float:
        return float(np.max(ratios * frontier**eta / gaps))

    coarse = np.arange(0.0, 4.0 + 1e-9, 0.25)
    admissible = [eta for eta in coarse if envelope(eta) <= W_FIT_C_CAP]
    eta = admissible[0] if admissible else float(min(coarse, key=envelope))
    if eta > 0 and admissible:
        fine = [e for e in np.linspace(eta - 0.25, eta, 11) if envelope(e) <= W_FIT_C_CAP]
        eta = float(fine[0])
    C = envelope(eta)
    slack = ratios - C * gaps / frontier**eta
    fit = WConditionFit(i, j, C, float(eta), len(ratios), float(max(0.0, slack.max())))
    logger.info("w-condition fitted", i=i, j=j, C=fit.C, eta=fit.eta, pairs=fit.sample_count)
    return fit


def validate_stratification(
    strat: Stratification,
    samples: int = 500,
    seed: int = DEFAULT_SEED,
    projection_tubes: Optional[Mapping[int, Tuple[float, float, float]]] = None,
) -> Dict[str, Any]:
    """
    Run every declarative check on a stratification.

    Args:
        projection_tubes: Per stratum id, (radius, tube, lipschitz) for the projection Lipschitz check

    Returns:
        Report with one entry per check and an overall ``passed`` flag
    """
    rng = np.random.default_rng(seed)
    report: Dict[str, Any] = {}

    lipschitz = {}
    for M in strat:
        if isinstance(M.shape, Graph):
            ok, worst = check_graph_lipschitz(M.shape, samples, rng)
            lipschitz[M.id] = {"passed": ok, "worst_ratio": worst, "declared": M.shape.lipschitz}
    report["graph_lipschitz"] = {"passed": all(v["passed"] for v in lipschitz.values()), "strata": lipschitz}
    report["frontier"] = check_frontier_condition(strat, min(samples, 200), rng)
    report["disjoint"] = check_disjoint(strat, samples, rng)
    report["projectors"] = check_projectors(strat, samples, rng)
    report["projection_optimality"] = check_projection_optimality(strat, samples, rng)
    tubes = {
        sid: check_projection_lipschitz(strat, sid, radius, tube, bound, pairs=min(samples, 1000), seed=seed)
        for sid, (radius, tube, bound) in (projection_tubes or {}).items()
    }
    report["projection_lipschitz"] = {"passed": all(v["passed"] for v in tubes.values()), "strata": tubes}
    report["passed"] = all(entry["passed"] for entry in report.values())

    logger.info("stratification validated", strata=len(strat), passed=report["passed"])
    return report
