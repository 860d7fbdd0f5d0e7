"""Time-series containers, the ``ds,y`` CSV contract, synthetic data and windowing."""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._random import SplitMix64
from .exceptions import (
    BadDate,
    BadSpec,
    MalformedCsv,
    NonMonotonicDates,
    SeriesTooShort,
    TooFewObservations,
)

def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RawSeries:
    """Timestamped observations; missing values are stored as NaN.

    Timestamps must be strictly increasing but need not be regular.
    """

    timestamps: tuple
    values: np.ndarray
    name: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.ndim != 1 or len(self.timestamps) != len(self.values):
            raise MalformedCsv("timestamps and values must have equal length")
        if np.isinf(self.values).any():
            raise MalformedCsv("infinite values are not allowed")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if not b > a:
                raise NonMonotonicDates(f"timestamp {b} does not follow {a}")
        if self.n_present < 2:
            raise TooFewObservations(
                f"need at least 2 present values, got {self.n_present}"
            )

    @property
    def missing(self):
        return np.isnan(self.values)

    @property
    def n_present(self):
        return int(np.count_nonzero(~np.isnan(self.values)))

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, RawSeries):
            return NotImplemented
        return (
            self.name == other.name
            and self.timestamps == other.timestamps
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Gap-free series on a regular daily grid: ``values[i]`` is at ``origin + i*step`` days."""

    origin: dt.date
    values: np.ndarray
    step: int = 1
    name: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.ndim != 1 or self.values.size == 0:
            raise TooFewObservations("a TimeSeries needs at least one value")
        if not np.isfinite(self.values).all():
            raise ValueError("TimeSeries values must all be finite")
        if int(self.step) < 1:
            raise BadSpec("step must be a positive number of days")

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.step == other.step
            and self.name == other.name
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def date_at(self, i):
        return self.origin + dt.timedelta(days=int(i) * int(self.step))

    @property
    def dates(self):
        return tuple(self.date_at(i) for i in range(len(self)))

    def with_values(self, values, origin=None):
        return TimeSeries(
            origin=self.origin if origin is None else origin,
            values=values,
            step=self.step,
            name=self.name,
        )

    def to_raw(self):
        return RawSeries(self.dates, self.values, self.name)


@dataclass(frozen=True)
class SupervisedWindows:
    """Lagged inputs and horizon-ahead targets cut from one series."""

    inputs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    lag_count: int
    horizon: int

    def __len__(self):
        return len(self.targets)


def _parse_date(text, lineno):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise BadDate(f"line {lineno}: cannot parse date {text!r}") from None


def _parse_value(text, lineno):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise MalformedCsv(f"line {lineno}: {text!r} is not a number") from None
    # only the empty cell encodes a missing value
    if not math.isfinite(value):
        raise MalformedCsv(f"line {lineno}: non-finite literal {text!r}")
    return value


def read_csv_text(text, name="y", value_column="y"):
    reader = csv.reader(io.StringIO(text, newline=""))
    rows = [row for row in reader if row]
    header = ("ds", value_column)
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise MalformedCsv(
            f"expected header '{','.join(header)}', got {rows[0] if rows else 'nothing'}"
        )
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise MalformedCsv(f"line {lineno}: expected 2 fields, got {len(row)}")
        dates.append(_parse_date(row[0], lineno))
        values.append(_parse_value(row[1], lineno))
    for a, b in zip(dates, dates[1:]):
        if not b > a:
            raise NonMonotonicDates(f"date {b} does not follow {a}")
    return RawSeries(tuple(dates), values, name)


def load_csv(path, name="y", value_column="y"):
    """Read a ``ds,y`` CSV. Empty ``y`` cells become missing values."""
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError:
        raise MalformedCsv(f"{path} is not valid UTF-8") from None
    return read_csv_text(text, name=name, value_column=value_column)


def format_value(value):
    if math.isnan(value):
        return ""
    return repr(float(value))


def write_rows(path, header, rows):
    """Write a CSV with LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_csv(series, path, value_column="y"):
    """Write a RawSeries or TimeSeries as ``ds,<value_column>``; floats keep full precision."""
    if isinstance(series, TimeSeries):
        series = series.to_raw()
    rows = [
        (d.isoformat(), format_value(v))
        for d, v in zip(series.timestamps, series.values)
    ]
    write_rows(path, ("ds", value_column), rows)


@dataclass(frozen=True)
class SyntheticSpec:
    slope: float = 0.0
    amplitude: float = 0.0
    period: float = 12.0
    noise_sd: float = 0.0
    length: int = 100
    seed: int = 0


def generate_synthetic(spec=None, origin=dt.date(2020, 1, 1), **kwargs):
    """Trend plus sine plus gaussian noise.

    ``values[i] = slope*i + amplitude*sin(2*pi*i/period) + N(0, noise_sd)``,
    with the noise drawn from a SplitMix64 stream seeded by ``seed``.
    Keyword arguments override fields of ``spec``.
    """
    if spec is None:
        spec = SyntheticSpec(**kwargs)
    elif kwargs:
        spec = SyntheticSpec(**{**spec.__dict__, **kwargs})
    if int(spec.length) != spec.length or spec.length <= 0:
        raise BadSpec(f"length must be a positive integer, got {spec.length}")
    if not spec.period > 0:
        raise BadSpec(f"period must be positive, got {spec.period}")
    if not spec.noise_sd >= 0:
        raise BadSpec(f"noise sd must be non-negative, got {spec.noise_sd}")
    n = int(spec.length)
    if spec.amplitude != 0 and n < 2 * spec.period:
        raise BadSpec(f"length {n} shorter than two periods ({spec.period})")
    rng = SplitMix64(spec.seed)
    values = np.empty(n)
    for i in range(n):
        value = spec.slope * i + spec.amplitude * math.sin(2.0 * math.pi * i / spec.period)
        if spec.noise_sd > 0:
            value += rng.gauss(0.0, spec.noise_sd)
        values[i] = value
    return TimeSeries(origin=origin, values=values, name="synthetic")


def make_windows(series, lag_count, horizon=1):
    """Cut ``(lags -> value horizon steps after the last lag)`` samples.

    Sample ``k`` uses ``values[k:k+lag_count]`` as inputs and
    ``values[k+lag_count+horizon-1]`` as target.
    """
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, float)
    lag_count, horizon = int(lag_count), int(horizon)
    if lag_count < 1 or horizon < 1:
        raise BadSpec("lag_count and horizon must be positive")
    n_samples = len(values) - lag_count - horizon + 1
    if n_samples < 1:
        raise SeriesTooShort(
            f"series of length {len(values)} is too short for "
            f"{lag_count} lags and horizon {horizon}"
        )
    inputs = np.lib.stride_tricks.sliding_window_view(values, lag_count)[:n_samples].copy()
    targets = values[lag_count + horizon - 1 :].copy()
    return SupervisedWindows(inputs, targets, lag_count, horizon)
