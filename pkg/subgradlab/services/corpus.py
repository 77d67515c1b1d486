"""
Benchmark registry: piecewise functions with declared stratifications, named L-regular cells
and frozen regression scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import structlog

from subgradlab.core.config import CORPUS_VALIDATE_ON_LOAD
from subgradlab.core.exceptions import NotFoundError, UnknownBenchmark, ValidationError
from subgradlab.services.cells import BandCell, Cell, GraphCell, Interval, ShrinkParams
from subgradlab.services.diagnostics import ProofConstants
from subgradlab.services.exponents import assign_exponents
from subgradlab.services.piecewise import Leaf, Max, PiecewiseFunction, Polynomial, SmoothPiece, Sum, check_function
from subgradlab.services.strata import AffinePatch, OpenRegion, Point, Sphere, Stratification, Stratum, validate_stratification

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class BenchmarkEntry:
    name: str
    description: str
    function: PiecewiseFunction
    stratification: Stratification
    critical_set: Tuple[Tuple[float, ...], ...]
    epsilon: float
    constants: ProofConstants
    default_x0: Tuple[float, ...]
    known_theta: Mapping[int, float] = field(default_factory=dict)

    @property
    def critical_value(self) -> float:
        return self.function.critical_value or 0.0

    def summary(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "dimension": self.function.dimension,
            "strata": len(self.stratification),
            "non_open_strata": len(self.stratification.non_open()),
            "critical_value": self.critical_value,
            "epsilon": self.epsilon,
            "known_theta": dict(self.known_theta),
        }


@dataclass(frozen=True)
class Scenario:
    name: str
    benchmark: str
    x0: Tuple[float, ...]
    schedule: str
    policy: str = "MinNorm"
    K: int = 1000
    seed: int = 42
    stratum: Optional[int] = None


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _leaf(piece_id: int, terms: Mapping[Tuple[int, ...], float], dimension: int) -> Leaf:
    return Leaf(SmoothPiece(piece_id, Polynomial.from_terms(terms, dimension)))


def _linear(piece_id: int, weights) -> Leaf:
    return Leaf(SmoothPiece(piece_id, Polynomial.affine(weights)))


def _constants(strat: Stratification, theta: float, radii: Mapping[int, float], epsilon: float) -> ProofConstants:
    return ProofConstants.from_exponents(assign_exponents(strat, theta), radii, epsilon=epsilon, alpha_bar=1.0)


def _split_line(ambient_box) -> Stratification:
    """{0}, (−∞, 0), (0, ∞) in ℝ."""
    return Stratification(
        (
            Stratum(0, Point([0.0]), label="origin"),
            Stratum(1, OpenRegion((Polynomial.affine([1.0]),), 1), (0,), "negative"),
            Stratum(2, OpenRegion((Polynomial.affine([-1.0]),), 1), (0,), "positive"),
        ),
        np.asarray(ambient_box, dtype=float),
    )


def _abs1d() -> BenchmarkEntry:
    box = [[-2.0, 2.0]]
    f = PiecewiseFunction("abs1d", Max((_linear(0, [1.0]), _linear(1, [-1.0]))), 1, box, 1.0, 0.0)
    strat = _split_line(box)
    return BenchmarkEntry(
        "abs1d",
        "|x| on [-2, 2]",
        f,
        strat,
        ((0.0,),),
        2.0,
        _constants(strat, 0.5, {0: 0.02, 1: 1.0, 2: 1.0}, 2.0),
        (0.55,),
        {1: 0.0, 2: 0.0},
    )


def _quad1d() -> BenchmarkEntry:
    box = [[-2.0, 2.0]]
    f = PiecewiseFunction("quad1d", _leaf(0, {(2,): 1.0}, 1), 1, box, 4.0, 0.0)
    strat = Stratification((Stratum(0, OpenRegion((), 1), label="line"),), np.asarray(box))
    return BenchmarkEntry(
        "quad1d",
        "x^2 on [-2, 2]",
        f,
        strat,
        ((0.0,),),
        4.0,
        _constants(strat, 0.5, {0: 1.0}, 4.0),
        (1.0,),
        {0: 0.5},
    )


_MAXLIN_NORMALS = ((0.0, 1.0), (-math.sqrt(3) / 2, -0.5), (math.sqrt(3) / 2, -0.5))


def _maxlin2d() -> BenchmarkEntry:
    box = [[-2.0, 2.0], [-2.0, 2.0]]
    a = np.array(_MAXLIN_NORMALS)
    f = PiecewiseFunction("maxlin2d", Max(tuple(_linear(i, a[i]) for i in range(3))), 2, box, 1.0, 0.0)
    # Ridge between pieces i and j bisects a_i and a_j; region i is where piece i is the strict maximum.
    ridges = {1: (0, 2), 2: (0, 1), 3: (1, 2)}
    strata = [Stratum(0, Point([0.0, 0.0]), label="triple point")]
    for sid, (i, j) in ridges.items():
        direction = a[i] + a[j]
        strata.append(Stratum(sid, AffinePatch.line([0.0, 0.0], direction, 0.0, np.inf), (0,), f"ridge {i}/{j}"))
    for i in range(3):
        others = [k for k in range(3) if k != i]
        inequalities = tuple(Polynomial.affine(a[k] - a[i]) for k in others)
        frontier = (0,) + tuple(sorted(sid for sid, pair in ridges.items() if i in pair))
        strata.append(Stratum(4 + i, OpenRegion(inequalities, 2), frontier, f"region {i}"))
    strat = Stratification(tuple(strata), np.asarray(box))
    radii = {0: 0.05, 1: 0.05, 2: 0.05, 3: 0.05, 4: 1.0, 5: 1.0, 6: 1.0}
    return BenchmarkEntry(
        "maxlin2d",
        "max of three linear functions with a triple point at the origin",
        f,
        strat,
        ((0.0, 0.0),),
        4.0,
        _constants(strat, 0.5, radii, 4.0),
        (0.5, 0.1),
        {4: 0.0, 5: 0.0, 6: 0.0},
    )


def _ridge2d() -> BenchmarkEntry:
    box = [[-2.0, 2.0], [-2.0, 2.0]]
    root = Sum((Max((_linear(0, [1.0, 0.0]), _linear(1, [-1.0, 0.0]))), _leaf(2, {(0, 2): 1.0}, 2)))
    f = PiecewiseFunction("ridge2d", root, 2, box, math.sqrt(17.0), 0.0)
    strat = Stratification(
        (
            Stratum(0, AffinePatch.line([0.0, 0.0], [0.0, 1.0]), label="x1 = 0"),
            Stratum(1, OpenRegion((Polynomial.affine([1.0, 0.0]),), 2), (0,), "x1 < 0"),
            Stratum(2, OpenRegion((Polynomial.affine([-1.0, 0.0]),), 2), (0,), "x1 > 0"),
        ),
        np.asarray(box),
    )
    return BenchmarkEntry(
        "ridge2d",
        "|x1| + x2^2 on [-2, 2]^2",
        f,
        strat,
        ((0.0, 0.0),),
        6.0,
        _constants(strat, 0.5, {0: 0.05, 1: 1.0, 2: 1.0}, 6.0),
        (0.5, 1.0),
        {0: 0.5},
    )


def _vee_pow() -> BenchmarkEntry:
    box = [[-1.5, 1.5]]
    root = Max((_leaf(0, {(3,): 1.0}, 1), _leaf(1, {(3,): -1.0}, 1)))
    f = PiecewiseFunction("vee_pow", root, 1, box, 3 * 1.5**2, 0.0)
    strat = _split_line(box)
    return BenchmarkEntry(
        "vee_pow",
        "|x|^3 as max(x^3, -x^3) on [-1.5, 1.5]",
        f,
        strat,
        ((0.0,),),
        1.5**3,
        _constants(strat, 2.0 / 3.0, {0: 0.02, 1: 1.0, 2: 1.0}, 1.5**3),
        (1.0,),
        {1: 2.0 / 3.0, 2: 2.0 / 3.0},
    )


def _nonconvex_ring() -> BenchmarkEntry:
    box = [[-2.0, 2.0], [-2.0, 2.0]]
    p = {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}
    root = Max((_leaf(0, p, 2), _leaf(1, {k: -v for k, v in p.items()}, 2)))
    f = PiecewiseFunction("nonconvex_ring", root, 2, box, 4 * math.sqrt(2.0), 0.0)
    level = Polynomial.from_terms(p, 2)
    outside = Polynomial.from_terms({k: -v for k, v in p.items()}, 2)
    strat = Stratification(
        (
            Stratum(0, Sphere([0.0, 0.0], 1.0), label="unit circle"),
            Stratum(1, OpenRegion((level,), 2), (0,), "inside"),
            Stratum(2, OpenRegion((outside,), 2), (0,), "outside"),
        ),
        np.asarray(box),
    )
    return BenchmarkEntry(
        "nonconvex_ring",
        "||x|^2 - 1| on [-2, 2]^2",
        f,
        strat,
        ((1.0, 0.0), (0.0, 1.0), (0.0, 0.0)),
        7.0,
        _constants(strat, 0.5, {0: 0.05, 1: 1.0, 2: 1.0}, 7.0),
        (1.5, 0.5),
        {},
    )


_BUILDERS: Dict[str, Callable[[], BenchmarkEntry]] = {
    "abs1d": _abs1d,
    "quad1d": _quad1d,
    "maxlin2d": _maxlin2d,
    "ridge2d": _ridge2d,
    "vee_pow": _vee_pow,
    "nonconvex_ring": _nonconvex_ring,
}


def list_benchmarks() -> List[str]:
    return sorted(_BUILDERS)


@lru_cache(maxsize=None)
def get(name: str) -> BenchmarkEntry:
    """
    Look up a benchmark by name.

    Raises:
        UnknownBenchmark: The name is not registered
        ValidationError: Load-time validation is enabled and a validator fails
    """
    builder = _BUILDERS.get(name)
    if builder is None:
        raise UnknownBenchmark(name, list_benchmarks())
    entry = builder()
    if CORPUS_VALIDATE_ON_LOAD:
        validate_entry(entry)
    return entry


def projection_tubes(entry: BenchmarkEntry) -> Dict[int, Tuple[float, float, float]]:
    """(perturbation radius, tube width, Lipschitz bound) for every non-open stratum, from its radius c_i."""
    L = max(1.0, entry.function.lipschitz_bound)
    tubes = {}
    for M in entry.stratification.non_open():
        c = entry.constants.stratum(M.id).c
        tubes[M.id] = (c, c, L)
    return tubes


def _failed_checks(prefix: str, report: Mapping[str, Any]) -> List[str]:
    return [f"{prefix}.{name}" for name, check in report.items() if isinstance(check, dict) and not check["passed"]]


def validate_entry(entry: BenchmarkEntry, samples: int = 500) -> Dict[str, Any]:
    """
    Function and stratification validators, projection tubes included.

    Raises:
        ValidationError: Any report fails; ``details["failed_checks"]`` names the failing checks
    """
    function_report = check_function(entry.function, probes=100, pairs=samples)
    strata_report = validate_stratification(entry.stratification, samples=samples, projection_tubes=projection_tubes(entry))
    failed = _failed_checks("function", function_report) + _failed_checks("stratification", strata_report)
    if failed or not (function_report["passed"] and strata_report["passed"]):
        raise ValidationError(
            f"benchmark {entry.name} failed validation",
            field="benchmark",
            details={"benchmark": entry.name, "failed_checks": failed},
        )
    logger.info("benchmark validated", benchmark=entry.name)
    return {"function": function_report, "stratification": strata_report}


# ---------------------------------------------------------------------------
# Cells and scenarios
# ---------------------------------------------------------------------------


def _cells() -> Dict[str, Tuple[Cell, ShrinkParams]]:
    unit = Interval(0.0, 1.0)
    x = Polynomial.affine([1.0])
    zero = Polynomial.affine([0.0])
    bowl = Polynomial.from_terms({(2,): 2.0}, 1)
    return {
        "interval": (unit, ShrinkParams()),
        "graph": (GraphCell(unit, x, 1.0), ShrinkParams()),
        "triangle": (BandCell(unit, zero, x, 1.0), ShrinkParams(c=1.0, kappa=1.0)),
        "square": (BandCell(unit, zero, Polynomial.affine([0.0], 1.0), 0.0), ShrinkParams(c=1.0, kappa=1.0)),
        "horseshoe": (
            BandCell(Interval(-1.0, 1.0), bowl, Polynomial.from_terms({(2,): 2.0, (0,): 0.3}, 1), 4.0),
            ShrinkParams(c=0.3, kappa=1.0),
        ),
    }


_SCENARIOS = (
    Scenario("abs1d_crossing", "abs1d", (0.105,), "Constant(0.01)", "FirstActive", 20),
    Scenario("abs1d_oscillation", "abs1d", (0.55,), "Constant(0.1)", "MinNorm", 200),
    Scenario("maxlin2d_crossing", "maxlin2d", (0.5, 0.1), "Power(0.05,0.5,1)", "MinNorm", 400),
    Scenario("ridge2d_descent", "ridge2d", (0.5, 1.0), "Harmonic(0.25,1)", "MinNorm", 10000, stratum=0),
    Scenario("quad1d_descent", "quad1d", (1.0,), "Harmonic(0.25,1)", "MinNorm", 10000, stratum=0),
)


def list_cells() -> List[str]:
    return sorted(_cells())


def get_cell(name: str) -> Tuple[Cell, ShrinkParams]:
    cells = _cells()
    if name not in cells:
        raise NotFoundError("Cell", name, details={"available": sorted(cells)})
    return cells[name]


def list_scenarios() -> List[str]:
    return [s.name for s in _SCENARIOS]


def get_scenario(name: str) -> Scenario:
    for scenario in _SCENARIOS:
        if scenario.name == name:
            return scenario
    raise NotFoundError("Scenario", name, details={"available": list_scenarios()})
