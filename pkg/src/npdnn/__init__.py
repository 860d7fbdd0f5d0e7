"""Additive trend/seasonality forecasting with a neural autoregressive term."""

from .forecaster import (
    FitReport,
    Hyperparams,
    NpDnnForecaster,
    NpDnnModel,
    fit,
    forecast,
    load_model,
    predict_in_sample,
    save_model,
)
from .preprocess import LinearImputer, OutlierRemover, ZScoreScaler
from .series_io import RawSeries, TimeSeries, generate_synthetic, load_csv, write_csv

__all__ = [
    "FitReport",
    "Hyperparams",
    "LinearImputer",
    "NpDnnForecaster",
    "NpDnnModel",
    "OutlierRemover",
    "RawSeries",
    "TimeSeries",
    "ZScoreScaler",
    "fit",
    "forecast",
    "generate_synthetic",
    "load_csv",
    "load_model",
    "predict_in_sample",
    "save_model",
    "write_csv",
]

__version__ = "0.1.0"
