"""
Tests for settings validation.
"""

from subgradlab.core import config
from subgradlab.core.env_validator import get_environment_info, validate_settings


def test_get_environment_info():
    """Test getting configuration information."""
    info = get_environment_info()

    assert isinstance(info, dict)
    for key in ("environment", "seed", "samples", "activity_tol", "generator_cap", "trace_schema"):
        assert key in info
    assert info["trace_schema"] == config.TRACE_SCHEMA_VERSION


def test_validate_settings():
    """Test settings validation (non-strict mode)."""
    is_valid, messages = validate_settings(strict=False)
    assert isinstance(is_valid, bool)
    assert isinstance(messages, list)
    assert is_valid is True


def test_validate_settings_reports_bad_values(monkeypatch):
    """An out-of-range tolerance is reported without exiting in non-strict mode."""
    monkeypatch.setattr(config, "SIGMA_GRID_MIN", 10.0)
    monkeypatch.setattr(config, "SIGMA_GRID_MAX", 1.0)

    is_valid, messages = validate_settings(strict=False)
    assert is_valid is False
    assert any("SIGMA_GRID_MIN" in m for m in messages)
