"""Small input-checking helpers shared by the estimators and functions."""

import numbers

import numpy as np

from .exceptions import DomainError


def check_finite_array(values, name="values", ndim=1):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_square(matrix, name="matrix"):
    arr = check_finite_array(matrix, name, ndim=2)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_positive_scalar(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_order(alpha):
    if not isinstance(alpha, numbers.Real) or not (0.0 < alpha < 2.0):
        raise DomainError(f"order alpha must lie in (0,2), got {alpha!r}")
    return float(alpha)


def check_dimension(d):
    if d not in (1, 2):
        raise DomainError(f"dimension d must be 1 or 2, got {d!r}")
    return int(d)


def as_values(u, n=None, name="u"):
    """Return the nodal values of a Field or array-like as a float array."""
    values = getattr(u, "values", u)
    arr = check_finite_array(values, name)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has {arr.shape[0]} values, expected {n}")
    return arr
