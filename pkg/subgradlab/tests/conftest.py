"""
Pytest configuration and fixtures for testing.
"""

import numpy as np
import pytest

from subgradlab.services import corpus


@pytest.fixture
def rng():
    """Return a seeded generator for sampling-based tests."""
    return np.random.default_rng(42)


@pytest.fixture
def abs1d():
    """Return the |x| benchmark."""
    return corpus.get("abs1d")


@pytest.fixture
def quad1d():
    """Return the x² benchmark."""
    return corpus.get("quad1d")


@pytest.fixture
def maxlin2d():
    """Return the max-of-three-planes benchmark."""
    return corpus.get("maxlin2d")


@pytest.fixture
def ridge2d():
    """Return the |x1| + x2² benchmark."""
    return corpus.get("ridge2d")


@pytest.fixture
def run_config(tmp_path):
    """Return a minimal experiment config document writing into a temporary directory."""
    return {
        "benchmark": "quad1d",
        "schedule": "Harmonic(1,1)",
        "policy": "MinNorm",
        "K": 200,
        "seed": 42,
        "output_dir": str(tmp_path / "out"),
    }
