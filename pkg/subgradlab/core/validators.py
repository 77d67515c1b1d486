"""
Shared validation functions for schemas and services.
"""

from typing import Sequence

import numpy as np


def validate_point(x: Sequence[float], dimension: int, field_name: str = "x") -> np.ndarray:
    """
    Validate a finite point of the given dimension.

    Args:
        x: Coordinates
        dimension: Expected ambient dimension
        field_name: Field name for error messages

    Returns:
        The point as a float64 array

    Raises:
        ValueError: If the shape is wrong or a coordinate is not finite
    """
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape != (dimension,):
        raise ValueError(f"{field_name} must have {dimension} coordinates, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{field_name} must be finite")
    return arr


def validate_box(box: Sequence[Sequence[float]]) -> np.ndarray:
    """
    Validate an axis-aligned box given as [[lo, hi], ...].

    Raises:
        ValueError: If a side is empty or the array is malformed
    """
    arr = np.asarray(box, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("box must be a list of [lo, hi] pairs")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError("box sides must satisfy lo < hi")
    return arr
