"""
Exponent assignment for the stratum neighbourhoods N(i, α) and an independent literal checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

import structlog

from subgradlab.core.config import EXPONENT_RESOLUTION
from subgradlab.core.exceptions import InfeasibleExponents, ValidationError
from subgradlab.services.strata import Stratification

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class StratumExponents:
    beta: float
    gamma: float
    omega: float
    eta: float = 1.0


@dataclass(frozen=True)
class ExponentAssignment:
    theta: float
    beta: float
    strata: Dict[int, StratumExponents] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "beta": self.beta,
            "strata": {
                i: {"beta": e.beta, "gamma": e.gamma, "omega": e.omega, "eta": e.eta} for i, e in self.strata.items()
            },
        }


def _upward_depths(strat: Stratification) -> Dict[int, List[int]]:
    """For each stratum, its longest chain of strata above it (itself first)."""
    parents: Dict[int, List[int]] = {s.id: [] for s in strat}
    for s in strat:
        for j in s.frontier_ids:
            parents[j].append(s.id)
    chains: Dict[int, List[int]] = {}
    for s in sorted(strat, key=lambda s: (-s.dim, s.id)):
        above = [chains[p] for p in sorted(parents[s.id])]
        chains[s.id] = [s.id] + (max(above, key=len) if above else [])
    return chains


def assign_exponents(
    strat: Stratification,
    theta: float,
    eta: Optional[Mapping[int, float]] = None,
) -> ExponentAssignment:
    """
    Assign (β_i, γ_i, ω_i) per stratum and the global β.

    Strata are processed by increasing dimension. β_i takes the midpoint of
    (max_j γ_j·max(1, η_i), (1−θ)((1−θ)/η̄)^{u_i−1}) and γ_i the midpoint of
    (β_i/(1−θ), ((1−θ)/η̄)^{u_i−1}), where u_i is the length of the longest chain of strata
    above and including i. This leaves room for every stratum above i.

    Raises:
        ValidationError: θ outside (0, 1) or a nonpositive η_i
        InfeasibleExponents: An admissible range is thinner than the resolution
    """
    if not 0.0 < theta < 1.0:
        raise ValidationError("theta must lie in (0, 1)", field="theta")
    eta = {s.id: float((eta or {}).get(s.id, 1.0)) for s in strat}
    if any(v <= 0 for v in eta.values()):
        raise ValidationError("eta values must be positive", field="eta")

    r = 1.0 - theta
    eta_bar = max(1.0, max(eta.values()))
    chains = _upward_depths(strat)
    assigned: Dict[int, StratumExponents] = {}

    for s in strat.by_dimension():
        for j in s.frontier_ids:
            if strat[j].dim >= s.dim:
                raise ValidationError(f"frontier stratum {j} of {s.id} must have lower dimension", field="frontier_ids")
        u = len(chains[s.id])
        room = (r / eta_bar) ** (u - 1)
        frontier_gammas = [assigned[j].gamma for j in s.frontier_ids]
        lower = max(frontier_gammas, default=0.0) * max(1.0, eta[s.id])
        upper = r * room
        if upper - lower < EXPONENT_RESOLUTION:
            raise InfeasibleExponents(theta, chains[s.id], details={"stratum": s.id, "lower": lower, "upper": upper})
        beta_i = 0.5 * (lower + upper)
        gamma_lo = beta_i / r
        if room - gamma_lo < EXPONENT_RESOLUTION:
            raise InfeasibleExponents(theta, chains[s.id], details={"stratum": s.id, "gamma_range": [gamma_lo, room]})
        gamma_i = 0.5 * (gamma_lo + room)
        omega_i = eta[s.id] * max(frontier_gammas, default=0.0)
        assigned[s.id] = StratumExponents(beta_i, gamma_i, omega_i, eta[s.id])

    beta = 0.5 * min(min(e.beta - e.omega, 2.0 - e.omega) for e in assigned.values())
    logger.debug("exponents assigned", theta=theta, beta=beta, strata=len(assigned))
    return ExponentAssignment(theta, beta, {i: assigned[i] for i in strat.ids})


def check_exponents(assignment: ExponentAssignment, strat: Stratification) -> Dict[str, Any]:
    """Re-evaluate every order constraint literally; returns the list of violated inequalities."""
    theta, beta = assignment.theta, assignment.beta
    violations: List[str] = []
    missing = [s.id for s in strat if s.id not in assignment.strata]
    if missing:
        violations.append(f"no exponents for strata {missing}")
    for s in strat:
        e = assignment.strata.get(s.id)
        if e is None:
            continue
        if not beta < e.beta:
            violations.append(f"beta < beta_{s.id} fails: {beta} >= {e.beta}")
        if not e.beta < e.gamma * (1 - theta):
            violations.append(f"beta_{s.id} < gamma_{s.id}(1-theta) fails")
        if not e.gamma * (1 - theta) < 1:
            violations.append(f"gamma_{s.id}(1-theta) < 1 fails")
        gammas = []
        for j in s.frontier_ids:
            g = assignment.strata.get(j)
            if g is None:
                continue
            gammas.append(g.gamma)
            if not e.beta > g.gamma:
                violations.append(f"beta_{s.id} > gamma_{j} fails")
            if not e.eta * g.gamma <= e.beta:
                violations.append(f"eta_{s.id} gamma_{j} <= beta_{s.id} fails")
        expected_omega = e.eta * max(gammas, default=0.0)
        if abs(e.omega - expected_omega) > 1e-15:
            violations.append(f"omega_{s.id} != eta_{s.id} sup gamma_j")
        if not beta <= min(e.beta - e.omega, 2 - e.omega):
            violations.append(f"beta <= min(beta_{s.id} - omega_{s.id}, 2 - omega_{s.id}) fails")
    if not beta > 0:
        violations.append("beta > 0 fails")
    return {"passed": not violations, "violations": violations}
