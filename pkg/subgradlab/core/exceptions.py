"""
Custom exception classes for standardized error handling.
"""

from typing import Any, Dict, List, Optional, Sequence


class SubgradLabError(Exception):
    """Base exception class for subgradlab errors."""

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.error_code = error_code or "SUBGRADLAB_ERROR"
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for reports and CLI output."""
        return {"error": self.error_code, "message": self.message, "details": self.details}


class ValidationError(SubgradLabError):
    """Exception raised when an input violates a documented precondition."""

    def __init__(self, message: str, field: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="VALIDATION_ERROR", details={"field": field, **(details or {})})


class NotFoundError(SubgradLabError):
    """Exception raised when a registered resource is not found."""

    def __init__(self, resource: str, identifier: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"{resource} with identifier '{identifier}' not found",
            error_code="NOT_FOUND",
            details={"resource": resource, "identifier": identifier, **(details or {})},
        )


class ConfigurationError(SubgradLabError):
    """Exception raised for unparseable or inconsistent configuration documents."""

    def __init__(
        self,
        message: str,
        config_key: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(
            message=f"{message}{location}",
            error_code="CONFIGURATION_ERROR",
            details={"config_key": config_key, "line": line, "column": column, **(details or {})},
        )


class UnknownBenchmark(NotFoundError):
    """Exception raised when a benchmark name is not registered in the corpus."""

    def __init__(self, name: str, available: Sequence[str] = ()):
        super().__init__(resource="Benchmark", identifier=name, details={"available": list(available)})
        self.error_code = "UNKNOWN_BENCHMARK"


# Piecewise models


class GeneratorOverflow(SubgradLabError):
    """Exception raised when Sum cross-combinations exceed the generator cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(
            message=f"Subdifferential needs {count} generators, cap is {cap}; restructure the model",
            error_code="GENERATOR_OVERFLOW",
            details={"count": count, "cap": cap},
        )


class InconsistentStratification(SubgradLabError):
    """Exception raised when generator projections onto a stratum tangent space disagree."""

    def __init__(self, stratum_id: int, spread: float, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"f is not smooth on stratum {stratum_id}: tangent projections differ by {spread:.3e}",
            error_code="INCONSISTENT_STRATIFICATION",
            details={"stratum_id": stratum_id, "spread": spread, **(details or {})},
        )


# Geometry


class OutsideTube(SubgradLabError):
    """Exception raised when a point lies outside the single-valued projection neighborhood."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="OUTSIDE_TUBE", details=details)


class DegenerateCell(SubgradLabError):
    """Exception raised when a shrunken cell is empty."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="DEGENERATE_CELL", details=details)


class NoSamplePairs(SubgradLabError):
    """Exception raised when sampling yields too few valid pairs for a constant fit."""

    def __init__(self, found: int, required: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Only {found} valid sample pairs, need {required}",
            error_code="NO_SAMPLE_PAIRS",
            details={"found": found, "required": required, **(details or {})},
        )


class DisconnectedSample(SubgradLabError):
    """Exception raised when an in-cell neighbor graph is disconnected."""

    def __init__(self, components: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Sample graph has {components} components; increase samples",
            error_code="DISCONNECTED_SAMPLE",
            details={"components": components, **(details or {})},
        )


class InfeasibleExponents(SubgradLabError):
    """Exception raised when no exponent assignment fits a frontier chain."""

    def __init__(self, theta: float, chain: List[int], details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"No exponent assignment for theta={theta} along chain {chain}",
            error_code="INFEASIBLE_EXPONENTS",
            details={"theta": theta, "chain": chain, **(details or {})},
        )
        self.chain = chain


# Diagnostics


class DegenerateSamples(SubgradLabError):
    """Exception raised when every sampled value coincides with the critical value."""

    def __init__(self, stratum_id: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"All samples on stratum {stratum_id} sit at the critical value",
            error_code="DEGENERATE_SAMPLES",
            details={"stratum_id": stratum_id, **(details or {})},
        )


class ConstantsMissing(SubgradLabError):
    """Exception raised when proof constants lack an entry the computation needs."""

    def __init__(self, missing: Sequence[Any], details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Proof constants missing for: {list(missing)}",
            error_code="CONSTANTS_MISSING",
            details={"missing": list(missing), **(details or {})},
        )


class NonDecreasingSchedule(SubgradLabError):
    """Exception raised when a bound requires nonincreasing steps and the schedule is not."""

    def __init__(self, index: int, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Step sizes increase at index {index}",
            error_code="NON_DECREASING_SCHEDULE",
            details={"index": index, **(details or {})},
        )


class Infeasible(SubgradLabError):
    """Exception raised when no grid pair of bound constants satisfies every report."""

    def __init__(self, tightest: int, ratio: float, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"No (sigma1, sigma2) on the grid satisfies report {tightest} (lhs/rhs ratio {ratio:.3e})",
            error_code="INFEASIBLE",
            details={"tightest": tightest, "ratio": ratio, **(details or {})},
        )
        self.tightest = tightest


class InsufficientDecades(SubgradLabError):
    """Exception raised when a run is too short for a two-decade rate fit."""

    def __init__(self, steps: int, required: int):
        super().__init__(
            message=f"Rate probe needs K >= {required}, got {steps}",
            error_code="INSUFFICIENT_DECADES",
            details={"steps": steps, "required": required},
        )
