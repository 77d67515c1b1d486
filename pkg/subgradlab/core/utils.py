"""
Core utility functions for common operations.
"""

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np


def get_current_timestamp() -> str:
    """
    Get current UTC timestamp in ISO format.

    Returns:
        ISO format timestamp string (e.g., "2024-01-01T12:00:00+00:00")
    """
    return datetime.now(timezone.utc).isoformat()


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy containers and scalars into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        # JSON has no infinities; keep the sentinel readable.
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def config_hash(config: Dict[str, Any]) -> str:
    """
    Stable short hash of a configuration dictionary.

    Args:
        config: JSON-serializable configuration

    Returns:
        First 16 hex characters of the SHA-256 of the canonical JSON form
    """
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    Write text to path atomically (temporary file in the same directory, then rename).

    Args:
        path: Destination file
        text: Full file contents

    Returns:
        The destination path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    """Write a JSON document atomically with sorted keys and two-space indentation."""
    return atomic_write_text(path, json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n")
