"""Additive trend, Fourier seasonality and event terms.

Every term is linear in its parameters, so a whole :class:`ComponentSet`
can be written as ``design_matrix(t) @ pack(components)``. Training uses
that form; the ``*_eval`` functions are the direct per-term definitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_real
from .exceptions import BadHyperparams


@dataclass(frozen=True)
class TrendParams:
    """Continuous piecewise-linear trend.

    ``k`` is the base rate per step, ``m`` the offset, and ``changepoints``
    a tuple of ``(location, rate_delta)`` pairs with increasing locations.
    """

    k: float = 0.0
    m: float = 0.0
    changepoints: tuple = ()

    def __post_init__(self):
        cps = tuple((float(s), float(d)) for s, d in self.changepoints)
        object.__setattr__(self, "changepoints", cps)
        locs = [s for s, _ in cps]
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise BadHyperparams("changepoint locations must be strictly increasing")
        if not np.isfinite([self.k, self.m, *locs, *(d for _, d in cps)]).all():
            raise BadHyperparams("trend parameters must be finite")

    @property
    def locations(self):
        return np.array([s for s, _ in self.changepoints], dtype=float)

    @property
    def deltas(self):
        return np.array([d for _, d in self.changepoints], dtype=float)


@dataclass(frozen=True)
class SeasonalityConfig:
    """Fourier series ``sum_n a_n cos(2 pi n t / P) + b_n sin(2 pi n t / P)``."""

    period: float
    fourier_order: int
    coefficients: tuple = None

    def __post_init__(self):
        check_real("period", self.period)
        if not self.period > 1:
            raise BadHyperparams(f"seasonality period must exceed 1, got {self.period}")
        order = check_int("fourier_order", self.fourier_order, 1)
        object.__setattr__(self, "fourier_order", order)
        coefs = self.coefficients
        if coefs is None:
            coefs = [(0.0, 0.0)] * order
        coefs = tuple((float(a), float(b)) for a, b in coefs)
        if len(coefs) != order:
            raise BadHyperparams(f"expected {order} coefficient pairs, got {len(coefs)}")
        if not np.isfinite(coefs).all():
            raise BadHyperparams("seasonality coefficients must be finite")
        object.__setattr__(self, "coefficients", coefs)

    @property
    def coef_array(self):
        return np.array(self.coefficients, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class EventConfig:
    """``(indices, weight)`` pairs; the weights of every event containing ``t`` add up."""

    events: tuple = ()

    def __post_init__(self):
        evs = []
        for indices, weight in self.events:
            indices = frozenset(int(i) for i in indices)
            if not indices:
                raise BadHyperparams("event index sets must be non-empty")
            if not np.isfinite(weight):
                raise BadHyperparams("event weights must be finite")
            evs.append((indices, float(weight)))
        object.__setattr__(self, "events", tuple(evs))

    @property
    def weights(self):
        return np.array([w for _, w in self.events], dtype=float)


@dataclass(frozen=True)
class ComponentSet:
    trend: TrendParams = field(default_factory=TrendParams)
    seasonalities: tuple = ()
    events: EventConfig = field(default_factory=EventConfig)

    def __post_init__(self):
        object.__setattr__(self, "seasonalities", tuple(self.seasonalities))

    @property
    def n_params(self):
        return (
            2
            + len(self.trend.changepoints)
            + sum(2 * s.fourier_order for s in self.seasonalities)
            + len(self.events.events)
        )


@dataclass
class ComponentGradients:
    """Gradient of the component sum, laid out like the parameters."""

    k: float
    m: float
    deltas: np.ndarray
    fourier: list
    event_weights: np.ndarray


def trend_eval(t, params):
    t = np.asarray(t, dtype=float)
    value = params.k * t + params.m
    for s, delta in params.changepoints:
        value = value + delta * np.maximum(t - s, 0.0)
    return value if value.ndim else float(value)


def _fourier_basis(t, period, order):
    """Columns ``cos(2 pi n t/P), sin(2 pi n t/P)`` for n = 1..order, interleaved."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = np.arange(1, order + 1)
    angle = 2.0 * np.pi * np.outer(t, n) / period
    basis = np.empty((len(t), 2 * order))
    basis[:, 0::2] = np.cos(angle)
    basis[:, 1::2] = np.sin(angle)
    return basis


def seasonality_eval(t, config):
    scalar = np.ndim(t) == 0
    value = _fourier_basis(t, config.period, config.fourier_order) @ config.coef_array.ravel()
    return float(value[0]) if scalar else value


def _event_indicators(t, config):
    t = np.atleast_1d(np.asarray(t))
    cols = np.zeros((len(t), len(config.events)))
    for j, (indices, _) in enumerate(config.events):
        cols[:, j] = [float(x) in indices for x in t]
    return cols


def events_eval(t, config):
    scalar = np.ndim(t) == 0
    if not config.events:
        value = np.zeros(np.shape(np.atleast_1d(t)))
    else:
        value = _event_indicators(t, config) @ config.weights
    return float(value[0]) if scalar else value


def components_eval(t, components):
    """Return ``(trend, seasonal_total, event_total, total)``.

    ``total`` is always summed as ``(trend + seasonal) + events``.
    """
    trend = trend_eval(t, components.trend)
    seasonal = 0.0 * np.asarray(t, dtype=float)
    for config in components.seasonalities:
        seasonal = seasonal + seasonality_eval(t, config)
    events = events_eval(t, components.events)
    total = (trend + seasonal) + events
    if np.ndim(t) == 0:
        return float(trend), float(seasonal), float(events), float(total)
    return trend, seasonal, events, total


def design_matrix(t, components):
    """Basis matrix whose product with :func:`pack` gives the component total."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    cols = [t[:, None], np.ones((len(t), 1))]
    locs = components.trend.locations
    if len(locs):
        cols.append(np.maximum(t[:, None] - locs[None, :], 0.0))
    for config in components.seasonalities:
        cols.append(_fourier_basis(t, config.period, config.fourier_order))
    if components.events.events:
        cols.append(_event_indicators(t, components.events))
    return np.hstack(cols)


def pack(components):
    """Flatten the learnable parameters in :func:`design_matrix` column order."""
    parts = [[components.trend.k, components.trend.m], components.trend.deltas]
    parts += [config.coef_array.ravel() for config in components.seasonalities]
    parts.append(components.events.weights)
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def unpack(components, theta):
    """Inverse of :func:`pack`: copy ``theta`` into the structure of ``components``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (components.n_params,):
        raise ValueError(f"expected {components.n_params} parameters, got {theta.shape}")
    k, m = theta[0], theta[1]
    pos = 2
    n_cp = len(components.trend.changepoints)
    deltas = theta[pos : pos + n_cp]
    pos += n_cp
    trend = TrendParams(
        float(k), float(m), tuple(zip(components.trend.locations, deltas))
    )
    seasonalities = []
    for config in components.seasonalities:
        width = 2 * config.fourier_order
        coefs = theta[pos : pos + width].reshape(-1, 2)
        pos += width
        seasonalities.append(
            SeasonalityConfig(config.period, config.fourier_order, tuple(map(tuple, coefs)))
        )
    weights = theta[pos:]
    events = EventConfig(
        tuple((idx, w) for (idx, _), w in zip(components.events.events, weights))
    )
    return ComponentSet(trend, tuple(seasonalities), events)


def component_gradients(t, components, upstream=1.0):
    """Gradient of ``upstream * total(t)`` with respect to every component parameter."""
    row = design_matrix(float(t), components)[0] * float(upstream)
    n_cp = len(components.trend.changepoints)
    pos = 2 + n_cp
    fourier = []
    for config in components.seasonalities:
        width = 2 * config.fourier_order
        fourier.append(row[pos : pos + width].reshape(-1, 2))
        pos += width
    return ComponentGradients(
        k=float(row[0]),
        m=float(row[1]),
        deltas=row[2 : 2 + n_cp],
        fourier=fourier,
        event_weights=row[pos:],
    )


def place_changepoints(n_train, count, span=0.8):
    """Evenly spaced integer changepoints over the first ``span`` of the training range.

    Mirrors Prophet's placement: ``count + 1`` points on
    ``[0, floor(span * n_train) - 1]`` with the leading zero dropped.
    Duplicates after rounding are removed, so fewer may come back.
    """
    if count <= 0:
        return []
    last = int(np.floor(span * n_train)) - 1
    if last < 1:
        return []
    locs = np.unique(np.round(np.linspace(0, last, count + 1)[1:]).astype(int))
    return [float(s) for s in locs if s > 0]
