"""Small argument checks in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np


def check_scalar(x, name, *, min_val=None, max_val=None, include_min=True,
                 include_max=True, target_type=numbers.Real):
    """Validate a scalar parameter and return it.

    Raises ``TypeError`` for the wrong type and ``ValueError`` when out of
    range. Mirrors :func:`sklearn.utils.check_scalar` but keeps the message
    short enough for CLI output.
    """
    if isinstance(x, bool) or not isinstance(x, target_type):
        raise TypeError(f"{name} must be {target_type.__name__}, got {type(x).__name__}")
    if not np.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x}")
    if min_val is not None:
        if (include_min and x < min_val) or (not include_min and x <= min_val):
            bound = ">=" if include_min else ">"
            raise ValueError(f"{name} must be {bound} {min_val}, got {x}")
    if max_val is not None:
        if (include_max and x > max_val) or (not include_max and x >= max_val):
            bound = "<=" if include_max else "<"
            raise ValueError(f"{name} must be {bound} {max_val}, got {x}")
    return x


def check_int(x, name, min_val=None):
    return check_scalar(x, name, min_val=min_val, target_type=numbers.Integral)


def check_points(points):
    """Return ``points`` as a float array of shape (n, 2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected points of shape (n, 2), got {pts.shape}")
    return pts


def check_vector(values, n, name):
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr
