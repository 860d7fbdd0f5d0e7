"""Input checks shared by the estimators and the functional API."""

import numbers

import numpy as np

from .exceptions import BadHyperparams, DimensionMismatch


def as_value_array(X, allow_nan=False):
    """Coerce a series object or array-like into a 1-D float64 array.

    Accepts ``TimeSeries``/``RawSeries`` (their ``values``), 1-D arrays and
    single-column 2-D arrays.
    """
    values = getattr(X, "values", X)
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D series, got shape {arr.shape}")
    bad = np.isinf(arr) if allow_nan else ~np.isfinite(arr)
    if bad.any():
        raise ValueError("input contains non-finite values")
    return arr


def as_vector(x, length=None, what="input"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{what} must be a vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatch(f"{what} has length {arr.shape[0]}, expected {length}")
    return arr


def check_int(name, value, low=None, high=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise BadHyperparams(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if (low is not None and value < low) or (high is not None and value > high):
        raise BadHyperparams(f"{name}={value} outside [{low}, {high}]")
    return value


def check_real(name, value, low=None, high=None, low_open=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise BadHyperparams(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise BadHyperparams(f"{name} must be finite")
    if low is not None and (value < low or (low_open and value == low)):
        raise BadHyperparams(f"{name}={value} below allowed minimum {low}")
    if high is not None and value > high:
        raise BadHyperparams(f"{name}={value} above allowed maximum {high}")
    return value
