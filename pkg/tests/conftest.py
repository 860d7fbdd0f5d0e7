import datetime as dt

import numpy as np
import pytest

from npdnn.forecaster import Hyperparams, fit
from npdnn.series_io import TimeSeries

ORIGIN = dt.date(2020, 1, 1)


def make_series(values, origin=ORIGIN):
    return TimeSeries(origin=origin, values=np.asarray(values, dtype=float))


@pytest.fixture(scope="session")
def line_series():
    # y = t on 200 daily points
    return make_series(np.arange(200.0))


@pytest.fixture(scope="session")
def line_fit(line_series):
    return fit(line_series, Hyperparams(epochs=500, seed=1))


@pytest.fixture(scope="session")
def offset_line_fit():
    series = make_series(100.0 + np.arange(200.0))
    model, report = fit(series, Hyperparams(epochs=2000, seed=1))
    return series, model, report
