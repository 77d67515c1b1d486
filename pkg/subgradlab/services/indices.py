"""
Index bookkeeping over a trajectory: the crossing set I_C, the stratum selection G and the
recursive indices l, s, q, H, U that organise the telescoping of the diameter bound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from subgradlab.core.config import GRAPH_SEGMENT_SUBDIVISIONS
from subgradlab.services.diagnostics import ProofConstants
from subgradlab.services.engine import Trajectory
from subgradlab.services.strata import AffinePatch, Point, Sphere, Stratification, Stratum

logger = structlog.get_logger(__name__)


# ---------------------------------------------------------------------------
# Segment distances
# ---------------------------------------------------------------------------


def _segment_point(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    d = b - a
    length = float(d @ d)
    lam = 0.0 if length == 0 else float(np.clip((p - a) @ d / length, 0.0, 1.0))
    return float(np.linalg.norm(a + lam * d - p))


def _segment_affine(a: np.ndarray, b: np.ndarray, patch: AffinePatch) -> float:
    # min |a + λ(b − a) − base − Bᵀu| over λ ∈ [0,1], u in the patch box, by active-set enumeration.
    A = np.column_stack([b - a, -patch.basis.T])
    h = patch.base - a
    lower = np.concatenate([[0.0], patch.lower])
    upper = np.concatenate([[1.0], patch.upper])
    choices = [[None] + [v for v in (lo, hi) if np.isfinite(v)] for lo, hi in zip(lower, upper)]
    best = np.inf
    for pattern in itertools.product(*choices):
        fixed = np.array([v is not None for v in pattern])
        z = np.array([0.0 if v is None else v for v in pattern])
        if np.any(~fixed):
            rhs = h - A[:, fixed] @ z[fixed]
            z[~fixed] = np.linalg.lstsq(A[:, ~fixed], rhs, rcond=None)[0]
        if np.any(z < lower - 1e-12) or np.any(z > upper + 1e-12):
            continue
        best = min(best, float(np.linalg.norm(A @ z - h)))
    return best


def _segment_sphere(a: np.ndarray, b: np.ndarray, sphere: Sphere) -> float:
    near = _segment_point(a, b, sphere.center)
    far = max(float(np.linalg.norm(a - sphere.center)), float(np.linalg.norm(b - sphere.center)))
    if near <= sphere.radius <= far:
        return 0.0
    if far < sphere.radius:
        return sphere.radius - far
    return near - sphere.radius


def segment_distance(a: np.ndarray, b: np.ndarray, stratum_id: int, strat: Stratification) -> float:
    """
    Distance from the segment [a, b] to a stratum. Exact for points, affine patches and spheres;
    other shapes are measured at GRAPH_SEGMENT_SUBDIVISIONS + 1 points along the segment.
    """
    shape = strat[stratum_id].shape
    if isinstance(shape, Point):
        return _segment_point(a, b, shape.point)
    if isinstance(shape, AffinePatch):
        return _segment_affine(a, b, shape)
    if isinstance(shape, Sphere):
        return _segment_sphere(a, b, shape)
    lam = np.linspace(0.0, 1.0, GRAPH_SEGMENT_SUBDIVISIONS + 1)[:, None]
    return float(strat.distances(a + lam * (b - a), stratum_id).min())


# ---------------------------------------------------------------------------
# Index trace
# ---------------------------------------------------------------------------


@dataclass
class IndexTrace:
    """
    I_C and the maps G, s, q, H, U. H is None for the +∞ sentinel; U is then counted up to
    the end of the run.
    """

    K: int
    I_C: List[int] = field(default_factory=list)
    G: Dict[int, int] = field(default_factory=dict)
    l: List[int] = field(default_factory=list)
    s: Dict[int, int] = field(default_factory=dict)
    q: Dict[int, int] = field(default_factory=dict)
    H: Dict[int, Optional[int]] = field(default_factory=dict)
    U: Dict[int, int] = field(default_factory=dict)
    g_fallbacks: int = 0
    membership_gaps: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "K": self.K,
            "I_C": run_length_encode(self.I_C),
            "G": {str(k): v for k, v in self.G.items()},
            "l": self.l,
            "s": {str(k): v for k, v in self.s.items()},
            "q": {str(k): v for k, v in self.q.items()},
            "H": {str(k): ("inf" if v is None else v) for k, v in self.H.items()},
            "U": {str(k): v for k, v in self.U.items()},
            "g_fallbacks": self.g_fallbacks,
            "membership_gaps": self.membership_gaps,
        }


def run_length_encode(indices: Sequence[int]) -> List[Tuple[int, int]]:
    """Sorted indices as inclusive [start, end] runs."""
    runs: List[Tuple[int, int]] = []
    for k in indices:
        if runs and k == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], k)
        else:
            runs.append((k, k))
    return runs


def _radii(pc: ProofConstants, strata: Sequence[Stratum], steps: np.ndarray, exponent: str) -> np.ndarray:
    return np.column_stack([pc.stratum(M.id).c * steps ** getattr(pc.stratum(M.id), exponent) for M in strata])


def _crossing_set(
    points: np.ndarray, dist: np.ndarray, strat: Stratification, strata: Sequence[Stratum], outer: np.ndarray
) -> List[int]:
    K = len(outer)
    crossing = []
    for k in range(K):
        a, b = points[k], points[k + 1]
        step = float(np.linalg.norm(b - a))
        for col, M in enumerate(strata):
            # d(segment, M) ≥ d(x_k, M) − |x_{k+1} − x_k| rules out most indices cheaply.
            if dist[k, col] - step > outer[k, col]:
                continue
            if segment_distance(a, b, M.id, strat) <= outer[k, col]:
                crossing.append(k)
                break
    return crossing


def extract_indices(traj: Trajectory, pc: ProofConstants, strat: Stratification) -> IndexTrace:
    """
    Literal transcription of the crossing index set and the recursion l_0 = min I_C,
    l_{m+1} = min{k > q(l_m) : k ∈ I_C}.

    Indices range over ⟦0, K−1⟧ where α_k is defined.

    Raises:
        ConstantsMissing: A non-open stratum has no proof constants
    """
    strata = strat.non_open()
    pc.require([M.id for M in strata])
    K = traj.K
    trace = IndexTrace(K)
    if K == 0 or not strata:
        return trace

    steps = np.asarray(traj.steps, dtype=float)
    points = traj.points
    gamma_r = _radii(pc, strata, steps, "gamma")
    beta_r = _radii(pc, strata, steps, "beta")
    dist = np.column_stack([strat.distances(points, M.id) for M in strata])
    col = {M.id: index for index, M in enumerate(strata)}
    dims = np.array([M.dim for M in strata])
    ids = np.array([M.id for M in strata])

    trace.I_C = _crossing_set(points, dist, strat, strata, gamma_r)

    def select(k: int) -> int:
        candidates = np.flatnonzero(dist[k] <= 2 * gamma_r[k])
        if len(candidates) == 0:
            # Segment touched a ball but x_k lies outside every doubled ball: take the closest relative hit.
            trace.g_fallbacks += 1
            candidates = np.array([int(np.argmin(dist[k] / (2 * gamma_r[k])))])
        order = sorted(candidates, key=lambda c: (dims[c], ids[c]))
        return int(ids[order[0]])

    for k in trace.I_C:
        trace.G[k] = select(k)

    def in_neighborhood(k: int, stratum_id: int) -> bool:
        c = col[stratum_id]
        if dist[k, c] > beta_r[k, c]:
            return False
        return all(dist[k, col[j]] > gamma_r[k, col[j]] for j in strat[stratum_id].frontier_ids)

    l = trace.I_C[0] if trace.I_C else None
    while l is not None:
        g = trace.G[l]
        trace.l.append(l)
        if in_neighborhood(l, g):
            s = l
            while s + 1 < K and in_neighborhood(s + 1, g):
                s += 1
        else:
            trace.membership_gaps += 1
            s = l
        c = col[g]
        near = [k for k in range(l, s + 1) if dist[k, c] <= 2 * gamma_r[k, c]]
        q = max(near) if near else l
        trace.s[l], trace.q[l] = s, q
        l = next((k for k in trace.I_C if k > q), None)

    for l in trace.l:
        later = [m for m in trace.l if m >= trace.s[l]]
        H = later[0] if later else None
        trace.H[l] = H
        end = K if H is None else H
        visited = {trace.G[k] for k in trace.I_C if trace.q[l] < k < end}
        trace.U[l] = len(visited) + 1

    logger.debug("indices extracted", crossings=len(trace.I_C), blocks=len(trace.l), fallbacks=trace.g_fallbacks)
    return trace


def check_index_invariants(trace: IndexTrace, T: int) -> List[str]:
    """Names of violated ordering invariants; empty when the trace is consistent."""
    violated = []
    crossing = set(trace.I_C)
    if any(l not in crossing for l in trace.l):
        violated.append("l_in_crossing_set")
    if any(not (l <= trace.q[l] <= trace.s[l]) for l in trace.l):
        violated.append("l_le_q_le_s")
    if any(b <= trace.q[a] for a, b in zip(trace.l, trace.l[1:])):
        violated.append("next_l_after_q")
    if trace.I_C and (not trace.l or trace.l[0] != trace.I_C[0]):
        violated.append("l0_is_first_crossing")
    if any(u > T or u < 1 for u in trace.U.values()):
        violated.append("U_bounded")
    return violated
