"""
Proof quantities on recorded trajectories: desingularizing fits, stratum neighbourhoods,
projected traces and their descent checks, and the diameter bound with its fitted constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import structlog

from subgradlab.core.config import (
    CAUCHY_MIN_STEPS,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    SIGMA_GRID_MAX,
    SIGMA_GRID_MIN,
    SIGMA_GRID_POINTS,
    SIGMA_REFINEMENTS,
)
from subgradlab.core.exceptions import (
    ConstantsMissing,
    DegenerateSamples,
    Infeasible,
    InsufficientDecades,
    NonDecreasingSchedule,
    OutsideTube,
    ValidationError,
)
from subgradlab.services.engine import StepSchedule, Trajectory, diameter, parse_schedule, tail_diameters
from subgradlab.services.exponents import ExponentAssignment
from subgradlab.services.piecewise import PiecewiseFunction, riemannian_gradient
from subgradlab.services.strata import Stratification, Stratum, project

logger = structlog.get_logger(__name__)


# ---------------------------------------------------------------------------
# Desingularizing functions
# ---------------------------------------------------------------------------


def psi(t: Union[float, np.ndarray], theta: float) -> Union[float, np.ndarray]:
    """ψ(t) = sgn(t)|t|^{1−θ}."""
    if not 0.0 < theta < 1.0:
        raise ValidationError("theta must lie in (0, 1)", field="theta")
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.abs(t) ** (1.0 - theta)
    return float(out) if out.ndim == 0 else out


def desingularizer(t: Union[float, np.ndarray], theta: float, eta: float) -> Union[float, np.ndarray]:
    """ψ(t)/((1−θ)η), whose derivative is |t|^{−θ}/η."""
    if not eta > 0:
        raise ValidationError("eta must be positive", field="eta")
    return psi(t, theta) / ((1.0 - theta) * eta)


# ---------------------------------------------------------------------------
# KL fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KLFit:
    stratum_id: int
    theta: float
    eta: float
    critical_value: float
    sample_count: int
    envelope_violations: int
    epsilon: float
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _lower_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of (x, y), left to right (monotone chain)."""
    order = np.lexsort((y, x))
    hull: List[int] = []
    for i in order:
        if hull and x[hull[-1]] == x[i]:
            continue
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def _stratum_samples(
    f: PiecewiseFunction, M: Stratum, strat: Optional[Stratification], rng: np.random.Generator, count: int
) -> np.ndarray:
    if strat is not None:
        return strat.sample(M.id, rng, count)
    return M.shape.sample(rng, count, np.asarray(f.box))


def _level_samples(
    f: PiecewiseFunction,
    M: Stratum,
    f_star: float,
    samples: int,
    rng: np.random.Generator,
    epsilon: Optional[float],
    strat: Optional[Stratification],
) -> Tuple[np.ndarray, np.ndarray]:
    kept, levels = [], []
    total = 0
    for _ in range(20):
        pts = _stratum_samples(f, M, strat, rng, samples)
        v = np.abs(f(pts) - f_star)
        mask = v > 0
        if epsilon is not None:
            mask &= v <= epsilon
        kept.append(pts[mask])
        levels.append(v[mask])
        total += int(mask.sum())
        if total >= samples:
            break
    if total == 0:
        raise DegenerateSamples(M.id, details={"critical_value": f_star, "epsilon": epsilon})
    return np.vstack(kept)[:samples], np.concatenate(levels)[:samples]


def _gradient_norms(f: PiecewiseFunction, M: Stratum, points: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(riemannian_gradient(f, M, p)) for p in points])


def estimate_kl(
    f: PiecewiseFunction,
    M: Stratum,
    f_star: float,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
    epsilon: Optional[float] = None,
    strat: Optional[Stratification] = None,
) -> KLFit:
    """
    Fit |∇_M f(x)| ≥ η|f(x) − f*|^θ on samples of M with 0 < |f − f*| ≤ ε.

    θ is the smallest slope of the lower convex hull of (log|f − f*|, log|∇_M f|) over the lower
    half of the sampled level range, clipped to [0, 1); η is the largest value with zero
    envelope violations.

    Raises:
        DegenerateSamples: Every sample sits at the critical value
    """
    rng = np.random.default_rng(seed)
    points, levels = _level_samples(f, M, f_star, samples, rng, epsilon, strat)
    grads = _gradient_norms(f, M, points)
    if np.any(grads <= 0):
        raise ValidationError(
            f"stratum {M.id} has critical points off the level {f_star}; no KL envelope exists", field="critical_value"
        )

    log_v, log_g = np.log(levels), np.log(grads)
    hull = _lower_hull(log_v, log_g)
    theta = 0.0
    if len(hull) >= 2:
        cutoff = log_v.min() + 0.5 * (log_v.max() - log_v.min())
        slopes = [
            (log_g[b] - log_g[a]) / (log_v[b] - log_v[a])
            for a, b in zip(hull[:-1], hull[1:])
            if log_v[a] <= cutoff
        ]
        theta = float(min(slopes)) if slopes else 0.0
    theta = float(np.clip(theta, 0.0, 1.0 - 1e-12))
    eta = float(np.min(grads / levels**theta))
    violations = int(np.count_nonzero(grads < eta * levels**theta))

    fit = KLFit(
        stratum_id=M.id,
        theta=theta,
        eta=eta,
        critical_value=f_star,
        sample_count=len(levels),
        envelope_violations=violations,
        epsilon=float(levels.max()) if epsilon is None else epsilon,
        seed=seed,
    )
    logger.info("kl fitted", stratum_id=M.id, theta=theta, eta=eta, samples=len(levels))
    return fit


def kl_violation_rate(
    fit: KLFit,
    f: PiecewiseFunction,
    M: Stratum,
    strat: Optional[Stratification] = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED + 1,
) -> float:
    """Share of fresh samples violating the fitted envelope."""
    rng = np.random.default_rng(seed)
    points, levels = _level_samples(f, M, fit.critical_value, samples, rng, fit.epsilon, strat)
    grads = _gradient_norms(f, M, points)
    bound = fit.eta * levels**fit.theta
    return float(np.mean(grads < bound * (1 - 1e-9)))


# ---------------------------------------------------------------------------
# Proof constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StratumConstants:
    """Neighbourhood radii c, exponents and the blow-up coefficients of L_{f,k}, L_{V,k}, L_{P,k}."""

    c: float
    beta: float
    gamma: float
    omega: float = 0.0
    eta: float = 1.0
    c_f: float = 0.0
    c_v: float = 0.0
    c_p: float = 0.0


@dataclass(frozen=True)
class ProofConstants:
    theta: float
    beta: float
    epsilon: float
    alpha_bar: float
    sigma1: float = 1.0
    sigma2: float = 1.0
    c: float = 1.0
    strata: Mapping[int, StratumConstants] = field(default_factory=dict)

    def stratum(self, stratum_id: int) -> StratumConstants:
        try:
            return self.strata[stratum_id]
        except KeyError:
            raise ConstantsMissing([stratum_id]) from None

    def require(self, ids: Iterable[int]) -> None:
        missing = [i for i in ids if i not in self.strata]
        if missing:
            raise ConstantsMissing(missing)

    def with_sigma(self, sigma1: float, sigma2: float) -> "ProofConstants":
        return replace(self, sigma1=sigma1, sigma2=sigma2)

    @classmethod
    def from_exponents(
        cls,
        assignment: ExponentAssignment,
        radii: Union[float, Mapping[int, float]],
        epsilon: float,
        alpha_bar: float,
        c: float = 1.0,
        sigma1: float = 1.0,
        sigma2: float = 1.0,
    ) -> "ProofConstants":
        """Per-stratum constants from an exponent assignment and the radii c_i."""
        strata = {}
        for i, e in assignment.strata.items():
            c_i = radii if isinstance(radii, (int, float)) else radii[i]
            strata[i] = StratumConstants(float(c_i), e.beta, e.gamma, e.omega, e.eta)
        return cls(assignment.theta, assignment.beta, epsilon, alpha_bar, sigma1, sigma2, c, strata)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "ProofConstants":
        from subgradlab.schemas.documents import ProofConstantsDocument

        parsed = ProofConstantsDocument.model_validate(doc)
        strata = {int(i): StratumConstants(**s.model_dump()) for i, s in parsed.strata.items()}
        return cls(
            parsed.theta,
            parsed.beta,
            parsed.epsilon,
            parsed.alpha_bar,
            parsed.sigma1,
            parsed.sigma2,
            parsed.c,
            strata,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "alpha_bar": self.alpha_bar,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "c": self.c,
            "strata": {i: dict(s.__dict__) for i, s in self.strata.items()},
        }


def neighborhood_membership(x: np.ndarray, alpha: float, pc: ProofConstants, strat: Stratification) -> Set[int]:
    """
    Ids i with d(x, M_i) ≤ c_i α^{β_i} and d(x, M_j) > c_j α^{γ_j} for every frontier stratum j of i.
    """
    if not alpha > 0:
        raise ValidationError("alpha must be positive", field="alpha")
    pc.require(strat.ids)
    x = np.asarray(x, dtype=float)
    distances = {s.id: strat.distance(x, s.id) for s in strat}
    members = set()
    for M in strat:
        sc = pc.stratum(M.id)
        if distances[M.id] > sc.c * alpha**sc.beta:
            continue
        if all(distances[j] > pc.stratum(j).c * alpha ** pc.stratum(j).gamma for j in M.frontier_ids):
            members.add(M.id)
    return members


# ---------------------------------------------------------------------------
# Projected traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProjectedTrace:
    """y_k = P_M(x_k), d_k = |x_k − y_k|, g_k = c Σ_{j≥k} α_j^{1+β}, z_k = f(y_k) − f* + g_k."""

    stratum_id: int
    points: np.ndarray
    distances: np.ndarray
    g: np.ndarray
    z: np.ndarray
    steps: np.ndarray
    outside: Tuple[int, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.outside


def tail_sums(steps: np.ndarray, c: float, beta: float) -> np.ndarray:
    """g_0..g_K with g_K = 0 and g_k − g_{k+1} = c·α_k^{1+β}."""
    increments = c * np.asarray(steps, dtype=float) ** (1.0 + beta)
    return np.append(np.cumsum(increments[::-1])[::-1], 0.0)


def projected_trace(
    traj: Trajectory,
    M: Stratum,
    pc: ProofConstants,
    f: PiecewiseFunction,
    strat: Optional[Stratification] = None,
) -> ProjectedTrace:
    """Shadow a trajectory on M; indices whose projection is ambiguous become NaN markers."""
    f_star = f.critical_value or 0.0
    ys = np.full_like(traj.points, np.nan)
    outside = []
    for k, x in enumerate(traj.points):
        try:
            ys[k] = project(M, x, strat)
        except OutsideTube:
            outside.append(k)
    d = np.linalg.norm(traj.points - ys, axis=1)
    g = tail_sums(traj.steps, pc.c, pc.beta)
    values = np.array([f(y) if np.all(np.isfinite(y)) else np.nan for y in ys])
    return ProjectedTrace(M.id, ys, d, g, values - f_star + g, np.asarray(traj.steps), tuple(outside))


def check_descent(
    pt: ProjectedTrace,
    f: PiecewiseFunction,
    M: Stratum,
    rtol: float = 1e-12,
) -> Dict[str, Any]:
    """
    ½α_k|∇_M f(y_k)|² ≤ z_k − z_{k+1} per index, plus monotonicity z_0 ≥ … ≥ z_K.
    Indices next to a projection marker are skipped and counted.
    """
    violations: List[int] = []
    worst = 0.0
    skipped = 0
    for k in range(len(pt.steps)):
        if not (np.isfinite(pt.z[k]) and np.isfinite(pt.z[k + 1])):
            skipped += 1
            continue
        grad = riemannian_gradient(f, M, pt.points[k])
        lhs = 0.5 * pt.steps[k] * float(grad @ grad)
        rhs = pt.z[k] - pt.z[k + 1]
        deficit = lhs - rhs
        if deficit > rtol * max(1.0, abs(pt.z[k])):
            violations.append(k)
            worst = max(worst, deficit)
    z = pt.z[np.isfinite(pt.z)]
    increases = np.flatnonzero(np.diff(z) > rtol * np.maximum(1.0, np.abs(z[:-1])))
    return {
        "stratum_id": pt.stratum_id,
        "violations": violations,
        "worst_deficit": worst,
        "monotone": len(increases) == 0,
        "monotone_violations": increases.tolist(),
        "checked": len(pt.steps) - skipped,
        "skipped": skipped,
    }


@dataclass(frozen=True)
class LocalConstants:
    """
    Per-step constants of a stratum neighbourhood, each of the form max(L, c/α_k^ω):
    L_{f,k} bounds the Riemannian gradient's variation, L_{V,k} the gap between projected subgradients
    and ∇_M f, L_{P,k} the variation of DP_M.
    """

    L: float
    c_f: float = 0.0
    c_v: float = 0.0
    c_p: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ValidationError("L must be at least 1", field="L")
        if min(self.c_f, self.c_v, self.c_p, self.omega) < 0:
            raise ValidationError("blow-up coefficients and omega must be nonnegative", field="c")

    @classmethod
    def uniform(cls, L: float, c_local: float = 0.0, omega: float = 0.0) -> "LocalConstants":
        return cls(L, c_local, c_local, c_local, omega)

    @classmethod
    def from_stratum(cls, L: float, sc: StratumConstants) -> "LocalConstants":
        return cls(L, sc.c_f, sc.c_v, sc.c_p, sc.omega)

    def _profile(self, c: float, steps: np.ndarray) -> np.ndarray:
        steps = np.asarray(steps, dtype=float)
        return np.maximum(self.L, c / steps**self.omega)

    def lf(self, steps: np.ndarray) -> np.ndarray:
        return self._profile(self.c_f, steps)

    def lv(self, steps: np.ndarray) -> np.ndarray:
        return self._profile(self.c_v, steps)

    def lp(self, steps: np.ndarray) -> np.ndarray:
        return self._profile(self.c_p, steps)


def g_condition_terms(pt: ProjectedTrace, local: LocalConstants) -> Dict[str, np.ndarray]:
    """Per-index terms of α L_V² d²/2 + L² α L_P d + L⁴ α² (L_f + L_P)/2."""
    alpha = pt.steps
    L = local.L
    Lf, Lv, Lp = local.lf(alpha), local.lv(alpha), local.lp(alpha)
    d = np.nan_to_num(pt.distances[:-1], nan=np.inf)
    return {
        "distance_squared": alpha * Lv**2 * d**2 / 2,
        "projection": L**2 * alpha * Lp * d,
        "curvature": L**4 * alpha**2 * (Lf + Lp) / 2,
    }


def g_condition_violations(pt: ProjectedTrace, local: LocalConstants) -> List[int]:
    """Indices where g_k − g_{k+1} falls short of the summed g-condition terms."""
    need = sum(g_condition_terms(pt, local).values())
    return np.flatnonzero(pt.g[:-1] - pt.g[1:] < need).tolist()


def projected_length_check(
    pt: ProjectedTrace,
    f: PiecewiseFunction,
    M: Stratum,
    klfit: KLFit,
    pc: ProofConstants,
    local: Optional[LocalConstants] = None,
) -> Dict[str, Any]:
    """
    Σ|y_{k+1} − y_k| against 2L(ψ(z_0) − ψ(z_K)) + Σ(L³L_{f,k} α² + L α L_{V,k} d + L α η g^θ) + L² max α,
    with ψ the fitted desingularizer. Without explicit local constants the stratum's own blow-up
    coefficients are used.

    Raises:
        ConstantsMissing: The stratum has no proof constants
    """
    sc = pc.stratum(M.id)
    if not pt.complete:
        raise ValidationError("projected trace has OutsideTube markers", field="pt", details={"outside": list(pt.outside)})
    local = local or LocalConstants.from_stratum(max(1.0, f.lipschitz_bound), sc)
    L = local.L
    alpha = pt.steps
    d = pt.distances[:-1]

    lhs = float(np.linalg.norm(np.diff(pt.points, axis=0), axis=1).sum())
    psi_term = 2 * L * (
        desingularizer(pt.z[0], klfit.theta, klfit.eta) - desingularizer(pt.z[-1], klfit.theta, klfit.eta)
    )
    components = {
        "psi_term": float(psi_term),
        "smoothness_term": float(np.sum(L**3 * local.lf(alpha) * alpha**2)),
        "distance_term": float(np.sum(L * alpha * local.lv(alpha) * d)),
        "desingularizer_term": float(np.sum(L * alpha * klfit.eta * pt.g[:-1] ** klfit.theta)),
        "max_step_term": float(L**2 * alpha.max()) if len(alpha) else 0.0,
    }
    rhs = sum(components.values())
    bad = g_condition_violations(pt, local)
    return {
        "stratum_id": M.id,
        "lhs": lhs,
        "rhs": rhs,
        "components": components,
        "satisfied": lhs <= rhs,
        "slack": rhs - lhs,
        "g_condition_violations": bad,
        "g_condition_holds": not bad,
    }


# ---------------------------------------------------------------------------
# Diameter bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundComponents:
    psi_term: float
    alpha_beta: float
    step_sum: float
    step_sum_power: float
    double_sum: float

    @property
    def others(self) -> float:
        return self.alpha_beta + self.step_sum + self.step_sum_power + self.double_sum


def compose_rhs(components: BoundComponents, sigma1: float, sigma2: float) -> float:
    return sigma1 * components.psi_term + sigma2 * components.others


@dataclass(frozen=True)
class BoundReport:
    diam_lhs: float
    components: BoundComponents
    sigma1: float
    sigma2: float
    rhs_total: float
    satisfied: bool
    slack: float
    hypotheses: Dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "diam_lhs": self.diam_lhs,
            "components": dict(self.components.__dict__),
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "rhs_total": self.rhs_total,
            "satisfied": self.satisfied,
            "slack": self.slack,
            "hypotheses": self.hypotheses,
        }


def _steps_array(schedule: Union[StepSchedule, str, Sequence[float], np.ndarray], K: int) -> np.ndarray:
    if isinstance(schedule, (StepSchedule, str)):
        return parse_schedule(schedule).steps(K)
    steps = np.asarray(schedule, dtype=float)[:K]
    if len(steps) != K:
        raise ValidationError(f"need {K} steps, got {len(steps)}", field="schedule")
    return steps


def theorem1_rhs(
    f0: float,
    fK: float,
    schedule: Union[StepSchedule, str, Sequence[float], np.ndarray],
    K: int,
    pc: ProofConstants,
    require_decreasing: bool = True,
) -> BoundComponents:
    """
    ψ(f0) − ψ(fK) and the four step terms α_0^β, Σα^{1+β}, (Σα^{1+β})^{1−θ}, Σ_k α_k(Σ_{j≥k} α_j^{1+β})^θ.
    The double sum is evaluated through suffix sums in O(K).

    Raises:
        ValidationError: A nonpositive step
        NonDecreasingSchedule: A step increases and require_decreasing is set
    """
    steps = _steps_array(schedule, K)
    if np.any(steps <= 0):
        raise ValidationError("steps must be positive", field="schedule")
    rises = np.flatnonzero(np.diff(steps) > 0)
    if require_decreasing and len(rises):
        raise NonDecreasingSchedule(int(rises[0]) + 1)
    theta, beta = pc.theta, pc.beta
    powered = steps ** (1.0 + beta)
    suffix = np.cumsum(powered[::-1])[::-1]
    total = float(suffix[0]) if K else 0.0
    return BoundComponents(
        psi_term=float(psi(f0, theta) - psi(fK, theta)),
        alpha_beta=float(steps.max() ** beta) if K else 0.0,
        step_sum=total,
        step_sum_power=total ** (1.0 - theta),
        double_sum=float(np.sum(steps * suffix**theta)),
    )


def check_diameter_bound(traj: Trajectory, pc: ProofConstants, critical_value: float = 0.0) -> BoundReport:
    """diam(x_{⟦0,K⟧}) against the composed right-hand side; hypotheses are flagged, never raised."""
    values = traj.values - critical_value
    hypotheses = {
        "decreasing_steps": bool(np.all(np.diff(traj.steps) <= 0)),
        "level_band": bool(np.all(np.abs(values) <= pc.epsilon)),
        "step_bound": bool(traj.K == 0 or traj.steps[0] <= pc.alpha_bar),
        "in_domain": not traj.left_domain,
    }
    lhs = diameter(traj, 0, traj.K)
    components = theorem1_rhs(values[0], values[-1], traj.steps, traj.K, pc, require_decreasing=False)
    rhs = compose_rhs(components, pc.sigma1, pc.sigma2)
    return BoundReport(lhs, components, pc.sigma1, pc.sigma2, rhs, lhs <= rhs, rhs - lhs, hypotheses)


@dataclass(frozen=True)
class SigmaFit:
    sigma1: float
    sigma2: float
    included: int
    excluded: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _feasible(lhs, psi_terms, others, s1, s2) -> np.ndarray:
    rhs = s1[:, None, None] * psi_terms[None, None, :] + s2[None, :, None] * others[None, None, :]
    return np.all(rhs >= lhs[None, None, :], axis=2)


def _best(s1: np.ndarray, s2: np.ndarray, ok: np.ndarray) -> Optional[Tuple[int, int]]:
    if not ok.any():
        return None
    cost = np.where(ok, s1[:, None] + s2[None, :], np.inf)
    best = np.flatnonzero(cost == cost.min())
    i, j = np.unravel_index(best, cost.shape)
    pick = int(np.argmin(s1[i]))
    return int(i[pick]), int(j[pick])


def _bracket(grid: np.ndarray, index: int) -> np.ndarray:
    lo = grid[max(index - 1, 0)]
    hi = grid[min(index + 1, len(grid) - 1)]
    return np.unique(np.append(np.geomspace(lo, hi, 9), grid[index]))


def fit_sigma(reports: Sequence[BoundReport]) -> SigmaFit:
    """
    Smallest (ς₁, ς₂) by ς₁ + ς₂ (ties to smaller ς₁) on a log grid, refined twice, satisfying every
    report. Reports with a negative ψ-difference are excluded and counted.

    Raises:
        ValidationError: No reports
        Infeasible: No grid pair satisfies every included report
    """
    if not reports:
        raise ValidationError("fit_sigma needs at least one report", field="reports")
    included = [(index, r) for index, r in enumerate(reports) if r.components.psi_term >= 0]
    excluded = len(reports) - len(included)
    if not included:
        raise ValidationError("every report has a negative psi difference", field="reports")
    lhs = np.array([r.diam_lhs for _, r in included])
    psi_terms = np.array([r.components.psi_term for _, r in included])
    others = np.array([r.components.others for _, r in included])

    s1 = s2 = np.geomspace(SIGMA_GRID_MIN, SIGMA_GRID_MAX, SIGMA_GRID_POINTS)
    best = _best(s1, s2, _feasible(lhs, psi_terms, others, s1, s2))
    if best is None:
        rhs = SIGMA_GRID_MAX * (psi_terms + others)
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.inf)
        worst = int(np.argmax(ratio))
        raise Infeasible(included[worst][0], float(ratio[worst]))

    for _ in range(SIGMA_REFINEMENTS):
        s1, s2 = _bracket(s1, best[0]), _bracket(s2, best[1])
        refined = _best(s1, s2, _feasible(lhs, psi_terms, others, s1, s2))
        if refined is None:
            break
        best = refined
    fit = SigmaFit(float(s1[best[0]]), float(s2[best[1]]), len(included), excluded)
    logger.info("sigma fitted", sigma1=fit.sigma1, sigma2=fit.sigma2, included=fit.included, excluded=excluded)
    return fit


def cauchy_rate_probe(traj: Trajectory, points: int = 50) -> float:
    """
    Least-squares slope of log diam(x_{⟦k,K⟧}) against log k over the last two decades of k.
    Returns −inf when the tail is identically zero.

    Raises:
        InsufficientDecades: K below the two-decade minimum
    """
    if traj.K < CAUCHY_MIN_STEPS:
        raise InsufficientDecades(traj.K, CAUCHY_MIN_STEPS)
    tails = tail_diameters(traj)
    ks = np.unique(np.round(np.geomspace(traj.K / 100, traj.K - 1, points)).astype(int))
    d = tails[ks]
    positive = d > 0
    if not positive.any():
        return -math.inf
    if positive.sum() < 2:
        return -math.inf
    slope = np.polyfit(np.log(ks[positive]), np.log(d[positive]), 1)[0]
    return float(slope)
