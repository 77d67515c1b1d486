"""
Settings validator to ensure numeric configuration is usable before any experiment runs.
"""

import logging
import os
import sys
from typing import Any, Dict, List, Tuple

from subgradlab.core import config

# Configure logging
logger = logging.getLogger(__name__)

# (name, value, predicate, requirement)
SETTING_CHECKS = [
    ("SUBGRADLAB_ACTIVITY_TOL", config.ACTIVITY_TOL, lambda v: v > 0, "must be positive"),
    ("SUBGRADLAB_GENERATOR_CAP", config.GENERATOR_CAP, lambda v: v >= 1, "must be at least 1"),
    ("SUBGRADLAB_MIN_NORM_TOL", config.MIN_NORM_TOL, lambda v: v > 0, "must be positive"),
    ("SUBGRADLAB_PROJECTION_MAX_STEPS", config.PROJECTION_MAX_STEPS, lambda v: v >= 1, "must be at least 1"),
    ("SUBGRADLAB_PROJECTION_AMBIGUITY", config.PROJECTION_AMBIGUITY, lambda v: v > 0, "must be positive"),
    ("SUBGRADLAB_SAMPLES", config.DEFAULT_SAMPLES, lambda v: v >= 1, "must be at least 1"),
    ("SUBGRADLAB_VERDICT_WINDOW_FRACTION", config.VERDICT_WINDOW_FRACTION, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    ("SUBGRADLAB_HARMONIC_OFFSET", config.HARMONIC_OFFSET, lambda v: v >= 1, "must be at least 1"),
    ("SUBGRADLAB_SIGMA_GRID_POINTS", config.SIGMA_GRID_POINTS, lambda v: v >= 3, "must be at least 3"),
    ("SUBGRADLAB_SWEEP_JOBS", config.SWEEP_JOBS, lambda v: v >= 1, "must be at least 1"),
]

RECOMMENDED_SETTINGS = {
    # Changing these breaks byte-for-byte comparability with shipped regression values
    "SUBGRADLAB_SEED": (config.DEFAULT_SEED, 42),
    "SUBGRADLAB_GENERATOR_CAP": (config.GENERATOR_CAP, 64),
}


def validate_settings(strict: bool = True) -> Tuple[bool, List[str]]:
    """
    Validate that numeric settings are in range.

    Args:
        strict: If True, exit on invalid settings. If False, just report.

    Returns:
        Tuple of (is_valid, list_of_errors_and_warnings)
    """
    errors = []
    warnings = []

    for name, value, predicate, requirement in SETTING_CHECKS:
        if not predicate(value):
            errors.append(f"Setting '{name}'={value} {requirement}")

    if config.SIGMA_GRID_MIN >= config.SIGMA_GRID_MAX:
        errors.append("SUBGRADLAB_SIGMA_GRID_MIN must be below SUBGRADLAB_SIGMA_GRID_MAX")

    for name, (value, recommended) in RECOMMENDED_SETTINGS.items():
        if value != recommended:
            warnings.append(f"Setting '{name}'={value} differs from the reference value {recommended}")

    if errors:
        logger.error("=" * 80)
        logger.error("SETTINGS VALIDATION FAILED")
        logger.error("=" * 80)
        for error in errors:
            logger.error(f"❌ {error}")
        logger.error("=" * 80)

    if warnings:
        logger.warning("=" * 80)
        for warning in warnings:
            logger.warning(f"⚠️  {warning}")
        logger.warning("=" * 80)

    is_valid = len(errors) == 0

    if not is_valid and strict and not os.environ.get("PYTEST_CURRENT_TEST"):
        logger.critical("Cannot run experiments with invalid settings")
        sys.exit(1)

    return is_valid, errors + warnings


def get_environment_info() -> Dict[str, Any]:
    """Get information about the current configuration, echoed into run summaries."""
    return {
        "environment": config.ENVIRONMENT,
        "seed": config.DEFAULT_SEED,
        "samples": config.DEFAULT_SAMPLES,
        "activity_tol": config.ACTIVITY_TOL,
        "generator_cap": config.GENERATOR_CAP,
        "verdict_window_fraction": config.VERDICT_WINDOW_FRACTION,
        "trace_schema": config.TRACE_SCHEMA_VERSION,
        "corpus_validate_on_load": config.CORPUS_VALIDATE_ON_LOAD,
    }

