"""Input validation helpers used by the estimators and the config layer."""

import numbers

import numpy as np
from sklearn.utils.validation import check_scalar

from .exceptions import ConfigurationError, ShapeError


def check_int(value, name, min_val=None, max_val=None):
    """``check_scalar`` for integers, re-raised as :class:`ConfigurationError`."""
    if isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer, got bool")
    try:
        return int(check_scalar(value, name, numbers.Integral, min_val=min_val, max_val=max_val))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def check_float(value, name, min_val=None, max_val=None, include_boundaries="both"):
    try:
        return float(
            check_scalar(
                value,
                name,
                numbers.Real,
                min_val=min_val,
                max_val=max_val,
                include_boundaries=include_boundaries,
            )
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def check_interval(low, high, name="interval"):
    low, high = float(low), float(high)
    if not (np.isfinite(low) and np.isfinite(high)):
        raise ConfigurationError(f"{name} bounds must be finite, got [{low}, {high}]")
    if low > high:
        raise ConfigurationError(f"{name} is empty: lower bound {low} > upper bound {high}")
    return low, high


def check_bounds(lower, upper, dimension=None):
    """Broadcast box bounds to 1-D float arrays and check ``lower < upper``."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if dimension is None:
        dimension = max(lower.size, upper.size)
    dimension = check_int(dimension, "dimension", min_val=1)
    try:
        lower = np.broadcast_to(lower, (dimension,)).copy()
        upper = np.broadcast_to(upper, (dimension,)).copy()
    except ValueError as exc:
        raise ShapeError(f"bounds do not broadcast to dimension {dimension}") from exc
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ConfigurationError("bounds must be finite")
    if np.any(lower >= upper):
        bad = int(np.argmax(lower >= upper))
        raise ConfigurationError(
            f"lower bound must be below upper bound in every coordinate (index {bad}: "
            f"{lower[bad]} >= {upper[bad]})"
        )
    return lower, upper


def check_vector(x, dimension, name="vector"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = np.full(dimension, float(x))
    if x.shape != (dimension,):
        raise ShapeError(f"{name} has shape {x.shape}, expected ({dimension},)")
    return x


def check_weights(weights, name="weights", atol=1e-12):
    """Positive, strictly decreasing weights summing to one."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ConfigurationError(f"{name} must be a non-empty sequence")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ConfigurationError(f"{name} must be positive, got {w.tolist()}")
    if np.any(np.diff(w) >= 0):
        raise ConfigurationError(f"{name} must be strictly decreasing, got {w.tolist()}")
    if abs(w.sum() - 1.0) > atol:
        raise ConfigurationError(f"{name} must sum to 1, got sum {w.sum()!r}")
    return tuple(float(v) for v in w)
