"""
Pydantic models for every JSON document that crosses the process boundary.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from subgradlab.core.config import DEFAULT_SAMPLES, DEFAULT_SEED, SWEEP_JOBS
from subgradlab.core.validators import validate_box

SHAPE_KINDS = ("point", "affine", "graph", "sphere", "open")


def _check_box(box: List[List[float]]) -> List[List[float]]:
    validate_box(box)
    return box


class FunctionDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1)
    dimension: int = Field(..., ge=1)
    box: List[List[float]]
    lipschitz_bound: float = Field(..., gt=0)
    critical_value: Optional[float] = None
    root: List[Any] = Field(..., min_length=1, description="Nested-array combinator tree")

    @field_validator("box")
    @classmethod
    def validate_box(cls, v: List[List[float]]) -> List[List[float]]:
        return _check_box(v)

    @model_validator(mode="after")
    def box_matches_dimension(self) -> "FunctionDocument":
        if len(self.box) != self.dimension:
            raise ValueError(f"box has {len(self.box)} rows, dimension is {self.dimension}")
        return self


class StratumDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int = Field(..., ge=0)
    label: str = ""
    frontier_ids: List[int] = Field(default_factory=list)
    shape: Dict[str, Any]

    @field_validator("shape")
    @classmethod
    def validate_kind(cls, v: Dict[str, Any]) -> Dict[str, Any]:
        if v.get("kind") not in SHAPE_KINDS:
            raise ValueError(f"shape kind must be one of {SHAPE_KINDS}")
        return v


class StratificationDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ambient_box: List[List[float]]
    strata: List[StratumDocument] = Field(..., min_length=1)

    @field_validator("ambient_box")
    @classmethod
    def validate_box(cls, v: List[List[float]]) -> List[List[float]]:
        return _check_box(v)


class StratumConstantsDocument(BaseModel):
    c: float = Field(..., gt=0)
    beta: float = Field(..., gt=0)
    gamma: float = Field(..., gt=0)
    omega: float = Field(0.0, ge=0)
    eta: float = Field(1.0, gt=0)
    c_f: float = Field(0.0, ge=0)
    c_v: float = Field(0.0, ge=0)
    c_p: float = Field(0.0, ge=0)


class ProofConstantsDocument(BaseModel):
    theta: float = Field(..., gt=0, lt=1)
    beta: float = Field(..., gt=0)
    epsilon: float = Field(..., gt=0)
    alpha_bar: float = Field(..., gt=0)
    sigma1: float = Field(1.0, ge=0)
    sigma2: float = Field(1.0, ge=0)
    c: float = Field(1.0, ge=0)
    strata: Dict[int, StratumConstantsDocument] = Field(default_factory=dict)


class DiagnosticsToggles(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kl: bool = False
    indices: bool = False
    bound: bool = False
    descent: bool = False


def _check_schedule(value: str) -> str:
    from subgradlab.core.exceptions import ValidationError
    from subgradlab.services.engine import parse_schedule

    try:
        parse_schedule(value)
    except ValidationError as e:
        raise ValueError(e.message) from None
    return value


def _check_policy(value: str) -> str:
    from subgradlab.services.piecewise import SelectionPolicy

    SelectionPolicy(value)
    return value


class ExperimentConfig(BaseModel):
    """Configuration of one run and the diagnostics attached to it; echoed verbatim into outputs."""

    model_config = ConfigDict(extra="forbid")

    benchmark: str
    x0: Optional[List[float]] = None
    schedule: str = "Harmonic(1,1)"
    policy: str = "MinNorm"
    K: int = Field(1000, ge=1)
    seed: int = DEFAULT_SEED
    tol: float = Field(1e-6, gt=0)
    diagnostics: DiagnosticsToggles = Field(default_factory=DiagnosticsToggles)
    output_dir: str = "out"
    stratum: Optional[int] = Field(None, ge=0, description="Stratum for kl/descent diagnostics")
    samples: int = Field(DEFAULT_SAMPLES, ge=1)
    constants: Optional[ProofConstantsDocument] = None

    @field_validator("schedule")
    @classmethod
    def validate_schedule(cls, v: str) -> str:
        return _check_schedule(v)

    @field_validator("policy")
    @classmethod
    def validate_policy(cls, v: str) -> str:
        return _check_policy(v)


class CellCheckConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cell: str = "triangle"
    t: float = Field(0.1, gt=0, le=1)
    samples: int = Field(DEFAULT_SAMPLES, ge=1)
    seed: int = DEFAULT_SEED
    output_dir: str = "out"


class SweepConfig(BaseModel):
    """Grid of runs: one row per (benchmark, schedule, policy, seed)."""

    model_config = ConfigDict(extra="forbid")

    benchmarks: List[str] = Field(..., min_length=1)
    schedules: List[str] = Field(..., min_length=1)
    policies: List[str] = Field(default_factory=lambda: ["MinNorm"], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [DEFAULT_SEED], min_length=1)
    K: int = Field(1000, ge=1)
    tol: float = Field(1e-6, gt=0)
    output_dir: str = "out"
    jobs: int = Field(SWEEP_JOBS, ge=1)
    traces: bool = False

    @field_validator("schedules")
    @classmethod
    def validate_schedules(cls, v: List[str]) -> List[str]:
        return [_check_schedule(s) for s in v]

    @field_validator("policies")
    @classmethod
    def validate_policies(cls, v: List[str]) -> List[str]:
        return [_check_policy(p) for p in v]
