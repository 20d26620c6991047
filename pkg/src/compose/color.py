"""
sRGB <-> linear-light transfer functions (IEC 61966-2-1)
"""
import numpy as np

from src.errors import InputValidationError

# Piecewise breakpoints of the standard transfer curve
_SRGB_KNEE = 0.04045
_LINEAR_KNEE = 0.0031308


def _check_unit_range(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputValidationError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InputValidationError(
            f"{name} values must lie in [0, 1], got [{arr.min():.6g}, {arr.max():.6g}]"
        )
    return arr


def srgb_to_linear(img: np.ndarray) -> np.ndarray:
    """
    Decode gamma-encoded sRGB values to linear light

    Args:
        img: Array of sRGB values in [0, 1], any shape

    Returns:
        float64 array of linear values, same shape
    """
    arr = _check_unit_range(img, "sRGB image")
    linear = np.where(
        arr <= _SRGB_KNEE,
        arr / 12.92,
        np.power((arr + 0.055) / 1.055, 2.4),
    )
    return np.clip(linear, 0.0, 1.0)


def linear_to_srgb(img: np.ndarray) -> np.ndarray:
    """
    Encode linear-light values with the sRGB transfer curve

    Args:
        img: Array of linear values in [0, 1], any shape

    Returns:
        float64 array of sRGB values, same shape
    """
    arr = _check_unit_range(img, "linear image")
    encoded = np.where(
        arr <= _LINEAR_KNEE,
        arr * 12.92,
        1.055 * np.power(arr, 1.0 / 2.4) - 0.055,
    )
    return np.clip(encoded, 0.0, 1.0)
