"""The composite forecaster: additive components plus a neural autoregressive term.

For a time index ``t`` with lag window ``w(t) = z[t-lag_count:t]`` of the
normalized series ``z``::

    zhat(t) = trend(t) + seasonal(t) + events(t) + head(extractor(w(t)))

All parameters (component coefficients and both networks) are trained
jointly by one Adam optimizer against the mean squared error in normalized
units. Forecasts are produced recursively and mapped back to original units.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._random import derive_seed, make_rng
from ._validation import as_value_array, check_int, check_real
from .decomposition import (
    ComponentSet,
    EventConfig,
    SeasonalityConfig,
    TrendParams,
    components_eval,
    design_matrix,
    pack,
    place_changepoints,
    unpack,
)
from .exceptions import (
    BadArchitecture,
    BadHyperparams,
    CorruptModel,
    DivergedLoss,
    LengthMismatch,
    SeriesTooShort,
    UnsupportedVersion,
)
from .neuralnet import (
    Adam,
    MlpNetwork,
    activation_backward,
    backprop,
    forward,
    init_network,
)
from .preprocess import NormalizationParams, zscore_fit
from .series_io import TimeSeries, make_windows

FORMAT_VERSION = 1
# dates for series passed as bare arrays
_DEFAULT_ORIGIN = dt.date(1970, 1, 1)


@dataclass(frozen=True)
class Hyperparams:
    """Model and training settings accepted by :func:`fit`.

    ``ar_penalty`` adds ``ar_penalty * mean(ar**2)`` to the training loss,
    where ``ar`` is the neural autoregressive output. Without it the lag
    network can absorb level and seasonality, leaving the additive terms
    meaningless even though the total fits well.
    """

    learning_rate: float = 0.01
    epochs: int = 500
    lag_count: int = 8
    hidden_dims: tuple = (16,)
    head_dims: tuple = ()
    changepoint_count: int = 8
    fourier_order: int = 3
    seasonality_period: float = 5.0
    batch_size: int = 32
    ar_penalty: float = 0.01
    seed: int = 0

    def __post_init__(self):
        check_real("learning_rate", self.learning_rate, 0.0, 1.0, low_open=True)
        check_real("ar_penalty", self.ar_penalty, 0.0)
        check_int("epochs", self.epochs, 1, 100_000)
        check_int("lag_count", self.lag_count, 1, 10_000)
        check_int("changepoint_count", self.changepoint_count, 0, 1000)
        check_int("fourier_order", self.fourier_order, 0, 100)
        check_int("batch_size", self.batch_size, 1)
        check_int("seed", self.seed)
        if self.fourier_order > 0:
            check_real("seasonality_period", self.seasonality_period)
            if not self.seasonality_period > 1:
                raise BadHyperparams("seasonality_period must exceed 1")
        for name in ("hidden_dims", "head_dims"):
            dims = getattr(self, name)
            if isinstance(dims, int):
                dims = (dims,)
            dims = tuple(check_int(name, d, 1, 4096) for d in dims)
            object.__setattr__(self, name, dims)
        if not self.hidden_dims:
            raise BadHyperparams("hidden_dims needs at least one layer width")
        for name in ("epochs", "lag_count", "changepoint_count", "fourier_order", "batch_size", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("learning_rate", "seasonality_period", "ar_penalty"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def replace(self, **changes):
        return Hyperparams(**{**asdict(self), **changes})


@dataclass(eq=False)
class NpDnnModel:
    norm: NormalizationParams
    components: ComponentSet
    extractor: MlpNetwork
    head: MlpNetwork
    lag_count: int
    train_len: int
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.extractor.input_dim != self.lag_count:
            raise BadArchitecture("extractor input width must equal lag_count")
        if self.head.input_dim != self.extractor.output_dim:
            raise BadArchitecture("head input width must equal extractor output width")
        if self.head.output_dim != 1:
            raise BadArchitecture("head must produce a single value")
        if self.train_len < self.lag_count:
            raise BadArchitecture("train_len shorter than lag_count")

    def __eq__(self, other):
        if not isinstance(other, NpDnnModel):
            return NotImplemented
        return (
            self.version == other.version
            and self.norm == other.norm
            and self.components == other.components
            and self.extractor == other.extractor
            and self.head == other.head
            and self.lag_count == other.lag_count
            and self.train_len == other.train_len
        )


@dataclass
class FitReport:
    """Losses are mean squared errors in normalized units."""

    epochs_run: int
    final_train_loss: float
    final_validation_loss: float
    loss_history: list = field(default_factory=list)
    validation_history: list = field(default_factory=list)


@dataclass
class InSamplePrediction:
    """Fitted values in original units; ``fitted`` is False where no lag window exists."""

    series: TimeSeries
    fitted: np.ndarray


def _initial_components(n_train, hp, events):
    changepoints = [(s, 0.0) for s in place_changepoints(n_train, hp.changepoint_count)]
    seasonalities = ()
    if hp.fourier_order > 0:
        seasonalities = (SeasonalityConfig(hp.seasonality_period, hp.fourier_order),)
    return ComponentSet(
        TrendParams(0.0, 0.0, changepoints),
        seasonalities,
        EventConfig(tuple((idx, 0.0) for idx in (events or ()))),
    )


def _column_scale(components, time_scale):
    """Per-parameter scale so the optimizer sees time measured in training lengths.

    Trend slope columns grow like ``t``; dividing them by ``time_scale`` keeps
    all design columns O(1), which Adam's fixed step size needs.
    """
    scale = np.ones(components.n_params)
    scale[0] = time_scale
    scale[2 : 2 + len(components.trend.changepoints)] = time_scale
    return scale


def _initial_networks(hp):
    widths = [hp.lag_count, *hp.hidden_dims]
    extractor = init_network(widths, ["relu"] * len(hp.hidden_dims), derive_seed(hp.seed, "extractor"))
    head_widths = [hp.hidden_dims[-1], *hp.head_dims, 1]
    head_acts = ["relu"] * len(hp.head_dims) + ["linear"]
    head = init_network(head_widths, head_acts, derive_seed(hp.seed, "head"))
    # the residual branch starts silent so the additive terms fit first
    head.layers[-1].weights[:] = 0.0
    return extractor, head


def cosine_lr(base, epoch, epochs, floor=0.01):
    """Cosine-annealed step size falling from ``base`` to ``floor * base``."""
    progress = epoch / max(epochs - 1, 1)
    return base * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress)))


def _split_sizes(n, lag_count, validation_fraction):
    n_val = max(1, int(round(validation_fraction * n)))
    n_train = n - n_val
    if n_train - lag_count < 1:
        raise SeriesTooShort(
            f"series of length {n} leaves no training windows for lag_count={lag_count}"
        )
    return n_train, n_val


def fit(series, hyperparams=None, validation_fraction=0.2, events=None):
    """Train a model on ``series`` and return ``(model, report)``.

    The trailing ``validation_fraction`` of the series is held out for the
    validation loss; normalization statistics come from the leading part only.
    ``events`` is an optional list of index collections, one learned weight each.
    """
    hp = hyperparams if isinstance(hyperparams, Hyperparams) else Hyperparams(**(hyperparams or {}))
    validation_fraction = check_real("validation_fraction", validation_fraction, 0.0, 0.5, low_open=True)
    values = as_value_array(series)
    n = len(values)
    if n < 3 * hp.lag_count:
        raise SeriesTooShort(f"need at least {3 * hp.lag_count} values, got {n}")
    n_train, _ = _split_sizes(n, hp.lag_count, validation_fraction)
    norm = zscore_fit(values[:n_train])
    z = (values - norm.mean) / norm.sd

    windows = make_windows(z, hp.lag_count, 1)
    t_all = np.arange(hp.lag_count, n)
    is_train = t_all < n_train

    components = _initial_components(n_train, hp, events)
    scale = _column_scale(components, float(n_train))
    basis = design_matrix(t_all, components) / scale
    theta = pack(components) * scale
    extractor, head = _initial_networks(hp)

    X_tr, y_tr, B_tr = windows.inputs[is_train], windows.targets[is_train], basis[is_train]
    X_va, y_va, B_va = windows.inputs[~is_train], windows.targets[~is_train], basis[~is_train]

    params = [theta, *extractor.parameters(), *head.parameters()]
    optimizer = Adam(hp.learning_rate)
    rng = make_rng(hp.seed, "fit_shuffle")
    feature_act = extractor.layers[-1].activation

    def predict_batch(X, B):
        acts_e = forward(extractor, X)
        acts_h = forward(head, acts_e[-1])
        return B @ theta + acts_h[-1][:, 0], acts_e, acts_h

    train_hist, val_hist = [], []
    n_tr = len(y_tr)
    for epoch in range(hp.epochs):
        optimizer.learning_rate = cosine_lr(hp.learning_rate, epoch, hp.epochs)
        order = rng.permutation(n_tr)
        for start in range(0, n_tr, hp.batch_size):
            idx = order[start : start + hp.batch_size]
            pred, acts_e, acts_h = predict_batch(X_tr[idx], B_tr[idx])
            upstream = 2.0 * (pred - y_tr[idx]) / len(idx)
            # the penalty only touches the residual branch
            head_upstream = upstream + 2.0 * hp.ar_penalty * acts_h[-1][:, 0] / len(idx)
            grads_h, grad_features = backprop(head, acts_h, head_upstream[:, None])
            delta_e = activation_backward(feature_act, acts_e[-1], grad_features)
            grads_e, _ = backprop(extractor, acts_e, delta_e)
            grads = [B_tr[idx].T @ upstream, *grads_e.as_list(), *grads_h.as_list()]
            optimizer.step(params, grads)
        train_loss = float(np.mean((predict_batch(X_tr, B_tr)[0] - y_tr) ** 2))
        val_loss = float(np.mean((predict_batch(X_va, B_va)[0] - y_va) ** 2))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergedLoss(f"non-finite loss after epoch {len(train_hist) + 1}")
        train_hist.append(train_loss)
        val_hist.append(val_loss)

    model = NpDnnModel(
        norm=norm,
        components=unpack(components, theta / scale),
        extractor=extractor,
        head=head,
        lag_count=hp.lag_count,
        train_len=n,
    )
    report = FitReport(len(train_hist), train_hist[-1], val_hist[-1], train_hist, val_hist)
    return model, report


def _normalize(model, values):
    return (np.asarray(values, dtype=float) - model.norm.mean) / model.norm.sd


def _denormalize(model, z):
    return np.asarray(z, dtype=float) * model.norm.sd + model.norm.mean


def ar_term(model, windows):
    """Neural autoregressive contribution for normalized lag windows (rows)."""
    features = forward(model.extractor, windows)[-1]
    return forward(model.head, features)[-1][..., 0]


def component_term(model, t):
    return design_matrix(t, model.components) @ pack(model.components)


def predict_normalized(model, windows, t):
    """Normalized one-step predictions for windows ending just before indices ``t``."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    return component_term(model, t) + ar_term(model, windows)


def predict_in_sample(model, series):
    """One-step fitted values over the training series, in original units."""
    values = as_value_array(series)
    if len(values) != model.train_len:
        raise LengthMismatch(
            f"series has {len(values)} values but the model was fitted on {model.train_len}"
        )
    z = _normalize(model, values)
    lag = model.lag_count
    out = values.copy()
    fitted = np.zeros(len(values), dtype=bool)
    if len(values) > lag:
        windows = make_windows(z, lag, 1).inputs
        t = np.arange(lag, len(values))
        out[lag:] = _denormalize(model, predict_normalized(model, windows, t))
        fitted[lag:] = True
    if isinstance(series, TimeSeries):
        result = series.with_values(out)
    else:
        result = TimeSeries(origin=_DEFAULT_ORIGIN, values=out)
    return InSamplePrediction(result, fitted)


def forecast(model, series, horizon, start=None):
    """Recursive multi-step forecast following ``series``.

    Each one-step prediction is appended to the lag window for the next step.
    Component terms are evaluated at ``start, start+1, ...`` where ``start``
    defaults to ``model.train_len`` (the history is taken to end where the
    training series ended). Only the last ``lag_count`` history values are read.
    """
    horizon = check_int("horizon", horizon, 1)
    values = as_value_array(series)
    lag = model.lag_count
    if len(values) < lag:
        raise SeriesTooShort(f"history has {len(values)} values, need lag_count={lag}")
    start = model.train_len if start is None else int(start)
    window = list(_normalize(model, values[len(values) - lag :]))
    preds = []
    for h in range(horizon):
        z = predict_normalized(model, np.array(window[-lag:]), np.array([start + h]))[0]
        preds.append(z)
        window.append(z)
    out = _denormalize(model, preds)
    if isinstance(series, TimeSeries):
        origin = series.date_at(len(series))
        return TimeSeries(origin=origin, values=out, step=series.step, name=series.name)
    return TimeSeries(origin=_DEFAULT_ORIGIN, values=out)


def component_table(model, t, history=None):
    """Per-index decomposition in original units.

    Returns a dict of arrays ``t, trend, seasonal, events, ar_residual, total``
    where ``total`` is the row sum. The normalization mean is carried by the
    trend column. ``ar_residual`` needs lag windows: it is taken from
    ``history`` (extended by recursive forecasts past its end) and is zero
    where no window is available or no history was given.
    """
    t = np.asarray(t, dtype=int)
    trend, seasonal, events, _ = components_eval(t.astype(float), model.components)
    sd, mean = model.norm.sd, model.norm.mean
    ar = np.zeros(len(t))
    if history is not None:
        values = as_value_array(history)
        lag = model.lag_count
        extra = int(t.max()) - len(values) + 1 if len(t) else 0
        if extra > 0:
            tail = forecast(model, values, extra, start=len(values)).values
            values = np.concatenate([values, tail])
        z = _normalize(model, values)
        ok = t >= lag
        if ok.any():
            windows = np.stack([z[i - lag : i] for i in t[ok]])
            ar[ok] = ar_term(model, windows)
    table = {
        "t": t,
        "trend": mean + sd * np.asarray(trend),
        "seasonal": sd * np.asarray(seasonal),
        "events": sd * np.asarray(events),
        "ar_residual": sd * ar,
    }
    table["total"] = ((table["trend"] + table["seasonal"]) + table["events"]) + table["ar_residual"]
    return table


def model_to_dict(model):
    comps = model.components
    return {
        "version": model.version,
        "lag_count": model.lag_count,
        "train_len": model.train_len,
        "norm": {"mean": model.norm.mean, "sd": model.norm.sd},
        "components": {
            "trend": {
                "k": comps.trend.k,
                "m": comps.trend.m,
                "changepoints": [[s, d] for s, d in comps.trend.changepoints],
            },
            "seasonalities": [
                {
                    "period": s.period,
                    "fourier_order": s.fourier_order,
                    "coefficients": [[a, b] for a, b in s.coefficients],
                }
                for s in comps.seasonalities
            ],
            "events": [
                {"indices": sorted(idx), "weight": w} for idx, w in comps.events.events
            ],
        },
        "extractor": model.extractor.to_dict(),
        "head": model.head.to_dict(),
    }


def model_from_dict(data):
    if not isinstance(data, dict) or "version" not in data:
        raise CorruptModel("model file has no version field")
    if data["version"] != FORMAT_VERSION:
        raise UnsupportedVersion(
            f"model format version {data['version']!r} is not supported (expected {FORMAT_VERSION})"
        )
    try:
        c = data["components"]
        components = ComponentSet(
            TrendParams(c["trend"]["k"], c["trend"]["m"], [tuple(p) for p in c["trend"]["changepoints"]]),
            tuple(
                SeasonalityConfig(s["period"], s["fourier_order"], [tuple(p) for p in s["coefficients"]])
                for s in c["seasonalities"]
            ),
            EventConfig(tuple((e["indices"], e["weight"]) for e in c["events"])),
        )
        model = NpDnnModel(
            norm=NormalizationParams(float(data["norm"]["mean"]), float(data["norm"]["sd"])),
            components=components,
            extractor=MlpNetwork.from_dict(data["extractor"]),
            head=MlpNetwork.from_dict(data["head"]),
            lag_count=int(data["lag_count"]),
            train_len=int(data["train_len"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptModel(f"model file failed validation: {exc}") from exc
    return model


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path} is not a readable model file: {exc}") from exc
    return model_from_dict(data)


class NpDnnForecaster(BaseEstimator):
    """Estimator wrapper around :func:`fit` / :func:`forecast`.

    Parameters mirror :class:`Hyperparams` plus ``validation_fraction``, so the
    estimator works with ``sklearn.base.clone`` and ``get_params``/``set_params``.

    Attributes
    ----------
    model_ : NpDnnModel
    report_ : FitReport
    history_ : TimeSeries
        The series passed to ``fit``; forecasts continue from its end.
    """

    def __init__(
        self,
        learning_rate=0.01,
        epochs=500,
        lag_count=8,
        hidden_dims=(16,),
        head_dims=(),
        changepoint_count=8,
        fourier_order=3,
        seasonality_period=5.0,
        batch_size=32,
        ar_penalty=0.01,
        validation_fraction=0.2,
        seed=0,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.lag_count = lag_count
        self.hidden_dims = hidden_dims
        self.head_dims = head_dims
        self.changepoint_count = changepoint_count
        self.fourier_order = fourier_order
        self.seasonality_period = seasonality_period
        self.batch_size = batch_size
        self.ar_penalty = ar_penalty
        self.validation_fraction = validation_fraction
        self.seed = seed

    def hyperparams(self):
        params = self.get_params()
        params.pop("validation_fraction")
        return Hyperparams(**params)

    def fit(self, X, y=None):
        if not isinstance(X, TimeSeries):
            X = TimeSeries(origin=_DEFAULT_ORIGIN, values=as_value_array(X))
        self.model_, self.report_ = fit(X, self.hyperparams(), self.validation_fraction)
        self.history_ = X
        return self

    def predict(self, horizon):
        """Forecast ``horizon`` steps past the end of the fitted series (original units)."""
        check_is_fitted(self)
        return forecast(self.model_, self.history_, horizon).values.copy()

    def predict_in_sample(self):
        """Fitted values over the training series; the first ``lag_count`` are the inputs themselves."""
        check_is_fitted(self)
        return predict_in_sample(self.model_, self.history_).series.values.copy()

    def score(self, X=None, y=None):
        """Negative validation MSE of the last fit (normalized units)."""
        check_is_fitted(self)
        return -self.report_.final_validation_loss
