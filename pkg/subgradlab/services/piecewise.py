"""
Piecewise-smooth function models: polynomial pieces combined by Max/Min/Sum/Scale/Affine nodes.

Serves exact values, Clarke subdifferential generators, minimum-norm subgradients and
Riemannian gradients on strata. Every object here is immutable once built.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import nnls

from subgradlab.core.config import (
    ACTIVITY_TOL,
    GENERATOR_CAP,
    HULL_TOL,
    MIN_NORM_TOL,
    RIEMANNIAN_AGREE_TOL,
    RIEMANNIAN_REJECT_TOL,
    sampling_settings,
)
from subgradlab.core.exceptions import GeneratorOverflow, InconsistentStratification, ValidationError

if TYPE_CHECKING:
    from subgradlab.services.strata import Stratum

logger = structlog.get_logger(__name__)


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------


def _key_to_exponents(key: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in key.split(","))


def _exponents_to_key(exponents: Sequence[int]) -> str:
    return ",".join(str(int(e)) for e in exponents)


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Multivariate polynomial stored as an exponent matrix and a coefficient vector."""

    exponents: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        exps = np.asarray(self.exponents, dtype=np.int64)
        coefs = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if exps.ndim != 2 or exps.shape[0] != coefs.shape[0]:
            raise ValidationError("exponent matrix and coefficients disagree", field="terms")
        if np.any(exps < 0):
            raise ValidationError("exponents must be nonnegative", field="terms")
        exps.setflags(write=False)
        coefs.setflags(write=False)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coefficients", coefs)

    @classmethod
    def from_terms(cls, terms: Mapping[Tuple[int, ...], float], dimension: int) -> "Polynomial":
        """Build from an exponent-tuple -> coefficient map."""
        exps = np.zeros((len(terms), dimension), dtype=np.int64)
        coefs = np.zeros(len(terms))
        for row, (exponent, coefficient) in enumerate(terms.items()):
            if len(exponent) != dimension:
                raise ValidationError(f"term {exponent} does not have {dimension} exponents", field="terms")
            exps[row] = exponent
            coefs[row] = coefficient
        return cls(exps, coefs)

    @classmethod
    def affine(cls, weights: Sequence[float], offset: float = 0.0) -> "Polynomial":
        """Build w·x + offset."""
        n = len(weights)
        terms: Dict[Tuple[int, ...], float] = {}
        for i, w in enumerate(weights):
            if w != 0.0:
                terms[tuple(int(i == j) for j in range(n))] = float(w)
        if offset != 0.0:
            terms[(0,) * n] = float(offset)
        return cls.from_terms(terms, n)

    @classmethod
    def from_document(cls, doc: Mapping[str, float], dimension: int) -> "Polynomial":
        return cls.from_terms({_key_to_exponents(k): float(v) for k, v in doc.items()}, dimension)

    @property
    def dimension(self) -> int:
        return int(self.exponents.shape[1])

    @property
    def degree(self) -> int:
        return int(self.exponents.sum(axis=1).max()) if len(self.coefficients) else 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not len(self.coefficients):
            return np.zeros(x.shape[:-1])
        monomials = np.prod(x[..., None, :] ** self.exponents, axis=-1)
        return monomials @ self.coefficients

    def derivative(self, i: int) -> "Polynomial":
        """Partial derivative with respect to coordinate i."""
        mask = self.exponents[:, i] > 0
        exps = self.exponents[mask].copy()
        coefs = self.coefficients[mask] * exps[:, i]
        exps[:, i] -= 1
        return Polynomial(exps, coefs)

    def terms(self) -> Dict[Tuple[int, ...], float]:
        return {tuple(int(e) for e in row): float(c) for row, c in zip(self.exponents, self.coefficients)}

    def to_document(self) -> Dict[str, float]:
        return {_exponents_to_key(row): float(c) for row, c in zip(self.exponents, self.coefficients)}


@dataclass(frozen=True, eq=False)
class SmoothPiece:
    """A polynomial leaf with analytic gradient and Hessian."""

    id: int
    polynomial: Polynomial
    _gradient: Tuple[Polynomial, ...] = field(init=False, repr=False)
    _hessian: Tuple[Tuple[Polynomial, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        grads = tuple(self.polynomial.derivative(i) for i in range(self.dimension))
        hess = tuple(tuple(g.derivative(j) for j in range(self.dimension)) for g in grads)
        object.__setattr__(self, "_gradient", grads)
        object.__setattr__(self, "_hessian", hess)

    @property
    def dimension(self) -> int:
        return self.polynomial.dimension

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.polynomial(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.stack([g(x) for g in self._gradient], axis=-1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return np.stack([np.stack([h(x) for h in row], axis=-1) for row in self._hessian], axis=-2)


# ---------------------------------------------------------------------------
# Combinator tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Resolution:
    """Value, subdifferential generators and active leaf ids of a node at one point."""

    value: float
    generators: np.ndarray
    active: Tuple[int, ...]


def _unique_rows(rows: Sequence[np.ndarray]) -> np.ndarray:
    kept: List[np.ndarray] = []
    for row in rows:
        if not any(np.array_equal(row, k) for k in kept):
            kept.append(row)
    return np.array(kept)


def _merge_ids(groups: Sequence[Tuple[int, ...]]) -> Tuple[int, ...]:
    return tuple(dict.fromkeys(i for group in groups for i in group))


class Node:
    """Base class of combinator nodes."""

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def resolve(self, x: np.ndarray, tol: float, cap: int) -> Resolution:
        raise NotImplementedError

    def directional(self, x: np.ndarray, d: np.ndarray, tol: float) -> float:
        """One-sided derivative f'(x; d) through the node's own combination rule."""
        raise NotImplementedError

    def leaves(self) -> Iterator[SmoothPiece]:
        raise NotImplementedError

    def to_document(self) -> list:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Leaf(Node):
    piece: SmoothPiece

    def value(self, x):
        return self.piece.value(x)

    def resolve(self, x, tol, cap):
        return Resolution(float(self.piece.value(x)), self.piece.gradient(x)[None, :], (self.piece.id,))

    def directional(self, x, d, tol):
        return float(self.piece.gradient(x) @ d)

    def leaves(self):
        yield self.piece

    def to_document(self):
        return ["leaf", self.piece.id, self.piece.polynomial.to_document()]


@dataclass(frozen=True, eq=False)
class _Extremum(Node):
    children: Tuple[Node, ...]

    def __post_init__(self):
        if not self.children:
            raise ValidationError(f"{type(self).__name__} needs at least one child", field="children")
        object.__setattr__(self, "children", tuple(self.children))

    def leaves(self):
        for child in self.children:
            yield from child.leaves()

    def _pick(self, values: np.ndarray) -> float:
        raise NotImplementedError

    def resolve(self, x, tol, cap):
        values = np.array([float(child.value(x)) for child in self.children])
        best = self._pick(values)
        resolved = [child.resolve(x, tol, cap) for child, v in zip(self.children, values) if abs(v - best) <= tol]
        generators = _unique_rows([g for r in resolved for g in r.generators])
        return Resolution(best, generators, _merge_ids([r.active for r in resolved]))

    def directional(self, x, d, tol):
        values = np.array([float(child.value(x)) for child in self.children])
        best = self._pick(values)
        slopes = [child.directional(x, d, tol) for child, v in zip(self.children, values) if abs(v - best) <= tol]
        return self._pick(np.array(slopes))


class Max(_Extremum):
    def value(self, x):
        return np.max(np.stack([c.value(x) for c in self.children]), axis=0)

    def _pick(self, values):
        return float(values.max())

    def to_document(self):
        return ["max", *[c.to_document() for c in self.children]]


class Min(_Extremum):
    def value(self, x):
        return np.min(np.stack([c.value(x) for c in self.children]), axis=0)

    def _pick(self, values):
        return float(values.min())

    def to_document(self):
        return ["min", *[c.to_document() for c in self.children]]


@dataclass(frozen=True, eq=False)
class Sum(Node):
    children: Tuple[Node, ...]

    def __post_init__(self):
        if not self.children:
            raise ValidationError("Sum needs at least one child", field="children")
        object.__setattr__(self, "children", tuple(self.children))

    def value(self, x):
        return np.sum(np.stack([c.value(x) for c in self.children]), axis=0)

    def resolve(self, x, tol, cap):
        resolved = [c.resolve(x, tol, cap) for c in self.children]
        count = int(np.prod([len(r.generators) for r in resolved]))
        if count > cap:
            raise GeneratorOverflow(count, cap)
        combos = [np.sum(combo, axis=0) for combo in itertools.product(*[r.generators for r in resolved])]
        return Resolution(sum(r.value for r in resolved), _unique_rows(combos), _merge_ids([r.active for r in resolved]))

    def directional(self, x, d, tol):
        return float(sum(c.directional(x, d, tol) for c in self.children))

    def leaves(self):
        for child in self.children:
            yield from child.leaves()

    def to_document(self):
        return ["sum", *[c.to_document() for c in self.children]]


@dataclass(frozen=True, eq=False)
class Scale(Node):
    factor: float
    child: Node

    def value(self, x):
        return self.factor * self.child.value(x)

    def resolve(self, x, tol, cap):
        r = self.child.resolve(x, tol / max(abs(self.factor), 1e-300), cap)
        return Resolution(self.factor * r.value, _unique_rows(list(self.factor * r.generators)), r.active)

    def directional(self, x, d, tol):
        return self.factor * self.child.directional(x, d, tol / max(abs(self.factor), 1e-300))

    def leaves(self):
        yield from self.child.leaves()

    def to_document(self):
        return ["scale", self.factor, self.child.to_document()]


@dataclass(frozen=True, eq=False)
class Affine(Node):
    """Composition child(A x + b)."""

    matrix: np.ndarray
    offset: np.ndarray
    child: Node

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        offset = np.asarray(self.offset, dtype=float).reshape(-1)
        if offset.shape[0] != matrix.shape[0]:
            raise ValidationError("affine offset length must match matrix rows", field="offset")
        matrix.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)

    def _inner(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T + self.offset

    def value(self, x):
        return self.child.value(self._inner(x))

    def resolve(self, x, tol, cap):
        r = self.child.resolve(self._inner(x), tol, cap)
        return Resolution(r.value, _unique_rows(list(r.generators @ self.matrix)), r.active)

    def directional(self, x, d, tol):
        return self.child.directional(self._inner(x), self.matrix @ np.asarray(d, dtype=float), tol)

    def leaves(self):
        yield from self.child.leaves()

    def to_document(self):
        return ["affine", self.matrix.tolist(), self.offset.tolist(), self.child.to_document()]


@dataclass(frozen=True, eq=False)
class PiecewiseFunction:
    """A locally Lipschitz piecewise-smooth function with a stated box and Lipschitz bound."""

    name: str
    root: Node
    dimension: int
    box: np.ndarray
    lipschitz_bound: float
    critical_value: Optional[float] = None

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float).reshape(self.dimension, 2)
        box.setflags(write=False)
        object.__setattr__(self, "box", box)
        if self.lipschitz_bound <= 0:
            raise ValidationError("lipschitz_bound must be positive", field="lipschitz_bound")
        ids = [piece.id for piece in self.root.leaves()]
        if len(ids) != len(set(ids)):
            raise ValidationError(f"leaf ids must be unique, got {ids}", field="root")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.root.value(np.asarray(x, dtype=float))

    def in_box(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.box[:, 0]) and np.all(x <= self.box[:, 1]))

    def sample_box(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.box[:, 0], self.box[:, 1], size=(count, self.dimension))

    def leaf(self, piece_id: int) -> SmoothPiece:
        for piece in self.root.leaves():
            if piece.id == piece_id:
                return piece
        raise ValidationError(f"no leaf with id {piece_id}", field="piece_id")


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubdifferentialSet:
    """Clarke subdifferential at base_point, represented by the generators of its convex hull."""

    generators: np.ndarray
    base_point: np.ndarray

    def __post_init__(self):
        gens = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if gens.shape[0] == 0:
            raise ValidationError("subdifferential must have at least one generator", field="generators")
        gens.setflags(write=False)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "base_point", np.asarray(self.base_point, dtype=float))

    def __len__(self) -> int:
        return int(self.generators.shape[0])

    def contains(self, v: np.ndarray, tol: float = HULL_TOL) -> bool:
        return hull_contains(self.generators, v, tol)


def evaluate(f: PiecewiseFunction, x: np.ndarray) -> float:
    """Combinator-resolved value of f at a single point."""
    return float(f(np.asarray(x, dtype=float)))


def directional_derivative(f: PiecewiseFunction, x: np.ndarray, d: np.ndarray, tol: float = ACTIVITY_TOL) -> float:
    """f'(x; d) resolved node by node: max over active children for Max, min for Min, sums and chain rule otherwise."""
    return float(f.root.directional(np.asarray(x, dtype=float), np.asarray(d, dtype=float), tol))


def active_pieces(f: PiecewiseFunction, x: np.ndarray, tol: float = ACTIVITY_TOL) -> Tuple[int, ...]:
    """Leaf ids within tol of the resolved value along the Max/Min path."""
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    return f.root.resolve(np.asarray(x, dtype=float), tol, GENERATOR_CAP).active


def clarke_subdifferential(
    f: PiecewiseFunction, x: np.ndarray, tol: float = ACTIVITY_TOL, cap: int = GENERATOR_CAP
) -> SubdifferentialSet:
    """Generators of the Clarke subdifferential of f at x (exact for Max/Min/Sum of C¹ pieces)."""
    x = np.asarray(x, dtype=float)
    resolution = f.root.resolve(x, tol, cap)
    return SubdifferentialSet(resolution.generators, x)


def hull_contains(generators: np.ndarray, v: np.ndarray, tol: float = HULL_TOL) -> bool:
    """
    Check whether v lies in the convex hull of the generator rows.

    Solves the nonnegative least-squares problem with an appended row of ones enforcing
    that the weights sum to one; v is a member when the residual vanishes up to tol.
    """
    gens = np.atleast_2d(np.asarray(generators, dtype=float))
    v = np.asarray(v, dtype=float).reshape(-1)
    scale = max(1.0, float(np.abs(gens).max()), float(np.abs(v).max()) if v.size else 1.0)
    A = np.vstack([gens.T, np.ones(gens.shape[0])]) / scale
    b = np.append(v, 1.0) / scale
    _, residual = nnls(A, b)
    return bool(residual <= max(tol, 64 * np.finfo(float).eps))


def _affine_minimizer(points: np.ndarray) -> np.ndarray:
    # argmin |Σ μ_i p_i| subject to Σ μ_i = 1, via the KKT system.
    m = points.shape[0]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = points @ points.T
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return solution[:m]


def min_norm_point(points: np.ndarray, tol: float = MIN_NORM_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """
    Wolfe's minimum-norm-point algorithm over the convex hull of the rows of points.

    Args:
        points: (m, n) generator matrix
        tol: optimality tolerance relative to the largest squared generator norm

    Returns:
        (nearest point to the origin, convex weights over all m rows)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = points.shape[0]
    weights_full = np.zeros(m)
    if m == 1:
        weights_full[0] = 1.0
        return points[0].copy(), weights_full

    sq_norms = np.einsum("ij,ij->i", points, points)
    scale = max(1.0, float(sq_norms.max()))
    active = [int(np.argmin(sq_norms))]
    weights = np.ones(1)
    x = points[active[0]].copy()

    for _ in range(50 * m):
        dots = points @ x
        j = int(np.argmin(dots))
        if float(x @ x) - dots[j] <= tol * scale or j in active:
            break
        active.append(j)
        weights = np.append(weights, 0.0)
        for _ in range(10 * m):
            mu = _affine_minimizer(points[active])
            if np.all(mu > tol):
                weights = mu
                break
            blocking = mu <= tol
            gap = weights[blocking] - mu[blocking]
            ratios = np.where(gap > 0, weights[blocking] / np.where(gap > 0, gap, 1.0), 0.0)
            step = float(min(1.0, ratios.min()))
            weights = (1.0 - step) * weights + step * mu
            keep = weights > tol
            if not np.any(keep):
                keep[int(np.argmax(weights))] = True
            active = [a for a, k in zip(active, keep) if k]
            weights = np.clip(weights[keep], 0.0, None)
            weights /= weights.sum()
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum()
        x = weights @ points[active]

    weights_full[active] = weights
    return weights_full @ points, weights_full


def min_norm_subgradient(S: SubdifferentialSet, tol: float = MIN_NORM_TOL) -> np.ndarray:
    """Nearest point to the origin of conv(generators)."""
    return min_norm_point(S.generators, tol)[0]


class SelectionPolicy(str, Enum):
    MIN_NORM = "MinNorm"
    FIRST_ACTIVE = "FirstActive"
    RANDOM_VERTEX = "RandomVertex"
    RANDOM_CONVEX_COMBINATION = "RandomConvexCombination"


def select_subgradient(S: SubdifferentialSet, policy: SelectionPolicy, rng: np.random.Generator) -> np.ndarray:
    """
    Realize the inclusion v ∈ ∂f(x) with one of the selection policies.

    Random policies always draw from rng, even for singleton sets, so a seed fixes the whole run.
    """
    policy = SelectionPolicy(policy)
    gens = S.generators
    if policy is SelectionPolicy.MIN_NORM:
        return min_norm_subgradient(S)
    if policy is SelectionPolicy.FIRST_ACTIVE:
        return gens[0].copy()
    if policy is SelectionPolicy.RANDOM_VERTEX:
        return gens[int(rng.integers(len(gens)))].copy()
    weights = rng.dirichlet(np.ones(len(gens)))
    return weights @ gens


def riemannian_gradient(f: PiecewiseFunction, M: "Stratum", y: np.ndarray, tol: float = ACTIVITY_TOL) -> np.ndarray:
    """
    Riemannian gradient of f on stratum M at y, as the tangent projection of any generator.

    Raises:
        InconsistentStratification: if generator projections disagree beyond the reject tolerance
    """
    y = np.asarray(y, dtype=float)
    S = clarke_subdifferential(f, y, tol)
    projector = M.tangent_projector(y)
    projected = S.generators @ projector
    spread = float(np.max(np.linalg.norm(projected - projected[0], axis=1)))
    if spread > RIEMANNIAN_REJECT_TOL:
        raise InconsistentStratification(M.id, spread, details={"point": y.tolist()})
    if spread > RIEMANNIAN_AGREE_TOL:
        logger.debug("tangent projections differ", stratum_id=M.id, spread=spread)
    return projected[0]


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def node_from_document(doc: Any, dimension: int) -> Node:
    """Parse a nested-array combinator document."""
    if not isinstance(doc, list) or not doc:
        raise ValidationError(f"combinator node must be a nonempty array, got {doc!r}", field="root")
    tag = doc[0]
    if tag == "leaf":
        _, piece_id, terms = doc
        return Leaf(SmoothPiece(int(piece_id), Polynomial.from_document(terms, dimension)))
    if tag in ("max", "min", "sum"):
        children = tuple(node_from_document(child, dimension) for child in doc[1:])
        return {"max": Max, "min": Min, "sum": Sum}[tag](children)
    if tag == "scale":
        _, factor, child = doc
        return Scale(float(factor), node_from_document(child, dimension))
    if tag == "affine":
        _, matrix, offset, child = doc
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[1] != dimension:
            raise ValidationError(f"affine matrix has {matrix.shape[1]} columns, expected {dimension}", field="root")
        return Affine(matrix, np.asarray(offset, dtype=float), node_from_document(child, matrix.shape[0]))
    raise ValidationError(f"unknown combinator tag {tag!r}", field="root")


def function_to_document(f: PiecewiseFunction) -> Dict[str, Any]:
    return {
        "name": f.name,
        "dimension": f.dimension,
        "box": f.box.tolist(),
        "lipschitz_bound": f.lipschitz_bound,
        "critical_value": f.critical_value,
        "root": f.root.to_document(),
    }


def function_from_document(doc: Mapping[str, Any]) -> PiecewiseFunction:
    """Validate the envelope with the pydantic schema, then parse the combinator tree."""
    from subgradlab.schemas.documents import FunctionDocument

    envelope = FunctionDocument.model_validate(doc)
    return PiecewiseFunction(
        name=envelope.name,
        root=node_from_document(envelope.root, envelope.dimension),
        dimension=envelope.dimension,
        box=np.asarray(envelope.box, dtype=float),
        lipschitz_bound=envelope.lipschitz_bound,
        critical_value=envelope.critical_value,
    )


# ---------------------------------------------------------------------------
# Model checks
# ---------------------------------------------------------------------------


def _leaf_probes(piece: SmoothPiece, f: PiecewiseFunction, rng: np.random.Generator, count: int) -> np.ndarray:
    if piece.dimension == f.dimension:
        return f.sample_box(rng, count)
    return rng.uniform(-1.0, 1.0, size=(count, piece.dimension))


def check_function(
    f: PiecewiseFunction,
    probes: int = sampling_settings.probe_samples,
    pairs: int = sampling_settings.samples,
    seed: int = sampling_settings.seed,
) -> Dict[str, Any]:
    """
    Sampling-based model checks: leaf gradients and Hessians against central differences,
    the Lipschitz bound on random pairs, activity coverage and directional-derivative soundness.

    Returns:
        JSON-able report with per-check pass flag and worst margin
    """
    rng = np.random.default_rng(seed)
    report: Dict[str, Any] = {}

    worst_grad = 0.0
    worst_hess = 0.0
    for piece in f.root.leaves():
        xs = _leaf_probes(piece, f, rng, probes)
        n = piece.dimension
        for x in xs:
            h = 1e-6 * max(1.0, float(np.abs(x).max()))
            eye = np.eye(n) * h
            fd_grad = np.array([(piece.value(x + e) - piece.value(x - e)) / (2 * h) for e in eye])
            grad = piece.gradient(x)
            worst_grad = max(worst_grad, float(np.linalg.norm(fd_grad - grad) / max(1.0, np.linalg.norm(grad))))
            fd_hess = np.array([(piece.gradient(x + e) - piece.gradient(x - e)) / (2 * h) for e in eye])
            hess = piece.hessian(x)
            worst_hess = max(worst_hess, float(np.linalg.norm(fd_hess - hess) / max(1.0, np.linalg.norm(hess))))
    report["gradient_consistency"] = {"passed": worst_grad <= 1e-6, "worst_relative_error": worst_grad}
    report["hessian_consistency"] = {"passed": worst_hess <= 1e-5, "worst_relative_error": worst_hess}

    xs = f.sample_box(rng, pairs)
    ys = f.sample_box(rng, pairs)
    dist = np.linalg.norm(xs - ys, axis=1)
    ratios = np.abs(f(xs) - f(ys)) / np.where(dist > 0, dist, np.inf)
    worst_ratio = float(ratios.max())
    report["lipschitz_bound"] = {
        "passed": worst_ratio <= f.lipschitz_bound * (1 + 1e-12),
        "bound": f.lipschitz_bound,
        "worst_ratio": worst_ratio,
    }

    coverage = all(len(active_pieces(f, x)) >= 1 for x in xs[:probes])
    report["activity_coverage"] = {"passed": coverage}

    worst_dir = 0.0
    t = 1e-7
    for x in xs[:probes]:
        d = rng.standard_normal(f.dimension)
        d /= np.linalg.norm(d)
        quotient = (evaluate(f, x + t * d) - evaluate(f, x)) / t
        worst_dir = max(worst_dir, abs(quotient - directional_derivative(f, x, d)))
    report["directional_soundness"] = {"passed": worst_dir <= 1e-4, "worst_gap": worst_dir}

    report["passed"] = all(entry["passed"] for entry in report.values() if isinstance(entry, dict))
    return report
