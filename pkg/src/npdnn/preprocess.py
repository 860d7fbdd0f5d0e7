"""Outlier removal, linear-interpolation imputation and Z-score scaling.

The free functions are the reference implementations; the transformer
classes wrap them with the fit/transform API so they can sit in a
``sklearn.pipeline.Pipeline`` over 1-D value arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_value_array
from .exceptions import MissingEndpoint, TooFewObservations, ZeroVariance
from .series_io import RawSeries, TimeSeries


@dataclass(frozen=True)
class NormalizationParams:
    mean: float
    sd: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.sd) and self.sd > 0):
            raise ValueError(f"invalid normalization params mean={self.mean} sd={self.sd}")


@dataclass(frozen=True)
class OutlierPolicy:
    method: str = "iqr"
    multiplier: float = 3.0

    def __post_init__(self):
        if self.method != "iqr":
            raise ValueError(f"unknown outlier method {self.method!r}")
        if not self.multiplier > 0:
            raise ValueError("outlier multiplier must be positive")


def iqr_fences(values, multiplier=3.0):
    """Return ``(low, high)`` Tukey fences over the non-missing values."""
    present = values[~np.isnan(values)]
    q1, q3 = np.percentile(present, [25, 75])
    iqr = q3 - q1
    return q1 - multiplier * iqr, q3 + multiplier * iqr


def remove_outliers(series, policy=OutlierPolicy(), return_count=False):
    """Mark present values outside the IQR fences as missing.

    Quartiles use linear interpolation between order statistics
    (``numpy.percentile`` default). Timestamps are left alone.
    """
    if series.n_present < 4:
        raise TooFewObservations(
            f"outlier detection needs 4 present values, got {series.n_present}"
        )
    values = series.values.copy()
    low, high = iqr_fences(values, policy.multiplier)
    with np.errstate(invalid="ignore"):
        outside = (values < low) | (values > high)
    values[outside] = np.nan
    cleaned = RawSeries(series.timestamps, values, series.name)
    if return_count:
        return cleaned, int(np.count_nonzero(outside))
    return cleaned


def interpolate_missing(x, y):
    """Fill NaNs in ``y`` by straight lines between the nearest present neighbours.

    ``x`` holds the (increasing) positions of ``y``. For a gap bracketed by
    ``(x1, y1)`` and ``(x2, y2)``, ``y(x) = y1 + (x - x1) * (y2 - y1) / (x2 - x1)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.array(y, dtype=float)
    missing = np.isnan(y)
    if not missing.any():
        return y
    if missing[0] or missing[-1]:
        raise MissingEndpoint("first and last observations must be present")
    known = np.flatnonzero(~missing)
    gaps = np.flatnonzero(missing)
    # right boundary = first known index after the gap, left = the one before it
    right = known[np.searchsorted(known, gaps)]
    left = known[np.searchsorted(known, gaps) - 1]
    x1, x2 = x[left], x[right]
    y1, y2 = y[left], y[right]
    y[gaps] = y1 + (x[gaps] - x1) * (y2 - y1) / (x2 - x1)
    return y


def impute_linear(series):
    """Put ``series`` on a daily grid and fill every gap by linear interpolation.

    Dates absent from ``series.timestamps`` count as missing rows. The first and
    last rows must be present: nothing is extrapolated.
    """
    if series.n_present < 2:
        raise TooFewObservations("need at least 2 present values")
    if series.missing[0] or series.missing[-1]:
        raise MissingEndpoint(
            f"first and last observations must be present "
            f"({series.timestamps[0]} .. {series.timestamps[-1]})"
        )
    origin = series.timestamps[0]
    offsets = np.array([(d - origin).days for d in series.timestamps])
    grid = np.full(offsets[-1] + 1, np.nan)
    grid[offsets] = series.values
    filled = interpolate_missing(np.arange(len(grid)), grid)
    return TimeSeries(origin=origin, values=filled, step=1, name=series.name)


def zscore_fit(series):
    """Mean and population standard deviation (divisor N)."""
    values = as_value_array(series)
    if len(values) < 2:
        raise TooFewObservations("z-score needs at least 2 values")
    mean = float(np.mean(values))
    sd = float(np.std(values))
    if sd == 0.0:
        raise ZeroVariance("all values are equal; standard deviation is zero")
    return NormalizationParams(mean, sd)


def _rewrap(series, values):
    if isinstance(series, TimeSeries):
        return series.with_values(values)
    return values


def zscore_apply(series, params):
    return _rewrap(series, (as_value_array(series) - params.mean) / params.sd)


def zscore_invert(series, params):
    return _rewrap(series, as_value_array(series) * params.sd + params.mean)


class OutlierRemover(TransformerMixin, BaseEstimator):
    """Replace values outside the IQR fences of the fitted data with NaN.

    Parameters
    ----------
    multiplier : float, default=3.0
        Fence width in interquartile ranges.
    """

    def __init__(self, multiplier=3.0):
        self.multiplier = multiplier

    def fit(self, X, y=None):
        values = as_value_array(X, allow_nan=True)
        OutlierPolicy(multiplier=self.multiplier)
        if np.count_nonzero(~np.isnan(values)) < 4:
            raise TooFewObservations("outlier detection needs 4 present values")
        self.low_, self.high_ = iqr_fences(values, self.multiplier)
        return self

    def transform(self, X):
        check_is_fitted(self)
        values = as_value_array(X, allow_nan=True).copy()
        with np.errstate(invalid="ignore"):
            values[(values < self.low_) | (values > self.high_)] = np.nan
        return values


class LinearImputer(TransformerMixin, BaseEstimator):
    """Stateless transformer filling NaN gaps of an evenly spaced array."""

    def fit(self, X, y=None):
        as_value_array(X, allow_nan=True)
        return self

    def transform(self, X):
        values = as_value_array(X, allow_nan=True)
        return interpolate_missing(np.arange(len(values)), values)


class ZScoreScaler(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Z-score scaling with population standard deviation.

    Attributes
    ----------
    params_ : NormalizationParams
        Mean and standard deviation learned in ``fit``.
    """

    def fit(self, X, y=None):
        self.params_ = zscore_fit(X)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self)
        return zscore_apply(X, self.params_)

    def inverse_transform(self, X):
        check_is_fitted(self)
        return zscore_invert(X, self.params_)
