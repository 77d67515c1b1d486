"""
Core configuration settings for subgradlab experiments.
"""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.environ.get(name, default).lower() in ("true", "1", "yes")


# Reproducibility
DEFAULT_SEED = int(os.environ.get("SUBGRADLAB_SEED", "42"))
DEFAULT_SAMPLES = int(os.environ.get("SUBGRADLAB_SAMPLES", "10000"))

# Subdifferential oracle
ACTIVITY_TOL = float(os.environ.get("SUBGRADLAB_ACTIVITY_TOL", "1e-9"))
GENERATOR_CAP = int(os.environ.get("SUBGRADLAB_GENERATOR_CAP", "64"))
MIN_NORM_TOL = float(os.environ.get("SUBGRADLAB_MIN_NORM_TOL", "1e-10"))
HULL_TOL = float(os.environ.get("SUBGRADLAB_HULL_TOL", "1e-12"))
# Generator projections onto a tangent space must agree to this tolerance; beyond the reject
# tolerance the stratum is declared inconsistent with f.
RIEMANNIAN_AGREE_TOL = float(os.environ.get("SUBGRADLAB_RIEMANNIAN_AGREE_TOL", "1e-8"))
RIEMANNIAN_REJECT_TOL = float(os.environ.get("SUBGRADLAB_RIEMANNIAN_REJECT_TOL", "1e-6"))

# Stratum geometry
PROJECTION_MAX_STEPS = int(os.environ.get("SUBGRADLAB_PROJECTION_MAX_STEPS", "100"))
PROJECTION_STATIONARITY = float(os.environ.get("SUBGRADLAB_PROJECTION_STATIONARITY", "1e-10"))
PROJECTION_AMBIGUITY = float(os.environ.get("SUBGRADLAB_PROJECTION_AMBIGUITY", "1e-6"))
PROJECTION_RESTARTS = int(os.environ.get("SUBGRADLAB_PROJECTION_RESTARTS", "2"))
MEMBERSHIP_TOL = float(os.environ.get("SUBGRADLAB_MEMBERSHIP_TOL", "1e-9"))
FRONTIER_TOL = float(os.environ.get("SUBGRADLAB_FRONTIER_TOL", "1e-6"))
DISJOINT_TOL = float(os.environ.get("SUBGRADLAB_DISJOINT_TOL", "1e-9"))
GRAPH_SEGMENT_SUBDIVISIONS = int(os.environ.get("SUBGRADLAB_GRAPH_SEGMENT_SUBDIVISIONS", "64"))
EXPONENT_RESOLUTION = float(os.environ.get("SUBGRADLAB_EXPONENT_RESOLUTION", "1e-9"))
W_FIT_C_CAP = float(os.environ.get("SUBGRADLAB_W_FIT_C_CAP", "1e3"))
QUASICONVEX_SAMPLES = int(os.environ.get("SUBGRADLAB_QUASICONVEX_SAMPLES", "600"))
QUASICONVEX_NEIGHBORS = int(os.environ.get("SUBGRADLAB_QUASICONVEX_NEIGHBORS", "96"))
MAX_CELL_DIMENSION = 3

# Engine
VERDICT_WINDOW_FRACTION = float(os.environ.get("SUBGRADLAB_VERDICT_WINDOW_FRACTION", "0.1"))
HARMONIC_OFFSET = int(os.environ.get("SUBGRADLAB_HARMONIC_OFFSET", "1"))
DIAMETER_REFERENCE_LIMIT = int(os.environ.get("SUBGRADLAB_DIAMETER_REFERENCE_LIMIT", "4096"))

# Diagnostics
SIGMA_GRID_MIN = float(os.environ.get("SUBGRADLAB_SIGMA_GRID_MIN", "1e-6"))
SIGMA_GRID_MAX = float(os.environ.get("SUBGRADLAB_SIGMA_GRID_MAX", "1e6"))
SIGMA_GRID_POINTS = int(os.environ.get("SUBGRADLAB_SIGMA_GRID_POINTS", "49"))
SIGMA_REFINEMENTS = 2
CAUCHY_MIN_STEPS = 1000

# Corpus
CORPUS_VALIDATE_ON_LOAD = _env_bool("SUBGRADLAB_CORPUS_VALIDATE_ON_LOAD", "true")

# CLI / outputs
SWEEP_JOBS = int(os.environ.get("SUBGRADLAB_SWEEP_JOBS", "1"))
TRACE_SCHEMA_VERSION = os.environ.get("SUBGRADLAB_TRACE_SCHEMA_VERSION", "subgradlab.trace/1")
SWEEP_SCHEMA_VERSION = os.environ.get("SUBGRADLAB_SWEEP_SCHEMA_VERSION", "subgradlab.sweep/1")
SUMMARY_CURVE_POINTS = int(os.environ.get("SUBGRADLAB_SUMMARY_CURVE_POINTS", "200"))

# Application settings
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
LOG_FORMAT = os.environ.get("SUBGRADLAB_LOG_FORMAT", "console")  # "console" or "json"
ENVIRONMENT = os.environ.get("ENVIRONMENT", "development")


@dataclass(frozen=True)
class SamplingSettings:
    """Monte-Carlo defaults shared by every sampling-based check."""

    seed: int = DEFAULT_SEED
    samples: int = DEFAULT_SAMPLES
    probe_samples: int = 1000
    frontier_tol: float = FRONTIER_TOL
    disjoint_tol: float = DISJOINT_TOL


# Create settings instance
sampling_settings = SamplingSettings()
