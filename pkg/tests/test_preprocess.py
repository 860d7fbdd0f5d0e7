import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npdnn.exceptions import MissingEndpoint, TooFewObservations, ZeroVariance
from npdnn.preprocess import (
    LinearImputer,
    NormalizationParams,
    OutlierPolicy,
    OutlierRemover,
    ZScoreScaler,
    impute_linear,
    remove_outliers,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)
from npdnn.series_io import RawSeries

from conftest import make_series


def raw(values, start=dt.date(2020, 1, 1)):
    dates = [start + dt.timedelta(days=i) for i in range(len(values))]
    return RawSeries(dates, values)


class TestOutliers:
    def test_tight_cluster_unchanged(self):
        cleaned, n = remove_outliers(raw([10, 11, 12, 11, 10]), return_count=True)
        assert n == 0
        assert cleaned == raw([10, 11, 12, 11, 10])

    def test_far_value_removed(self):
        # sorted 10,11,11,12,1000: Q1 = 11, Q3 = 12, IQR = 1, upper fence 12 + 3 = 15
        cleaned, n = remove_outliers(raw([10, 11, 12, 11, 1000]), OutlierPolicy(multiplier=3.0),
                                     return_count=True)
        assert n == 1
        assert list(cleaned.missing) == [False, False, False, False, True]

    def test_constant_series_unchanged(self):
        cleaned, n = remove_outliers(raw([5.0] * 6), return_count=True)
        assert n == 0 and cleaned.n_present == 6

    def test_needs_four_values(self):
        with pytest.raises(TooFewObservations):
            remove_outliers(raw([1, math.nan, 2, 3]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.one_of(st.floats(-1e6, 1e6), st.just(math.nan)), min_size=6, max_size=40))
    def test_never_touches_timestamps_or_missing(self, values):
        values = [1.0, *values, 2.0, 3.0, 4.0, 5.0]
        series = raw(values)
        cleaned = remove_outliers(series)
        assert cleaned.timestamps == series.timestamps
        assert not (series.missing & ~cleaned.missing).any()


class TestImpute:
    def test_midpoint(self):
        filled = impute_linear(raw([10, math.nan, 30]))
        assert filled.values[1] == 20.0

    def test_by_hand_quarter_point(self):
        # (0, 5) to (4, 7): 5 + 3 * (2 / 4) = 6.5
        filled = impute_linear(raw([5, math.nan, math.nan, math.nan, 7]))
        assert filled.values[3] == pytest.approx(6.5, abs=1e-15)

    def test_identity_on_complete(self):
        s = raw([3.0, 1.0, 4.0, 1.0, 5.0])
        assert impute_linear(s) == make_series([3.0, 1.0, 4.0, 1.0, 5.0]).with_values(s.values)

    def test_calendar_gaps_become_rows(self):
        s = RawSeries([dt.date(2020, 1, 1), dt.date(2020, 1, 4)], [1.0, 4.0])
        filled = impute_linear(s)
        assert len(filled) == 4
        np.testing.assert_allclose(filled.values, [1, 2, 3, 4])

    @pytest.mark.parametrize("values", [[math.nan, 1, 2], [1, 2, math.nan]])
    def test_no_extrapolation(self, values):
        with pytest.raises(MissingEndpoint):
            impute_linear(raw(values))

    @settings(max_examples=60, deadline=None)
    @given(
        slope=st.floats(-100, 100),
        intercept=st.floats(-1000, 1000),
        n=st.integers(3, 60),
        drop=st.data(),
    )
    def test_affine_exactness(self, slope, intercept, n, drop):
        x = np.arange(n, dtype=float)
        truth = intercept + slope * x
        holes = drop.draw(st.sets(st.integers(1, n - 2)))
        values = truth.copy()
        values[list(holes)] = np.nan
        filled = impute_linear(raw(values))
        np.testing.assert_allclose(filled.values, truth, rtol=0,
                                   atol=1e-12 * max(1.0, abs(intercept), abs(slope) * n))


class TestZScore:
    def test_two_points(self):
        assert zscore_fit(make_series([0.0, 2.0])) == NormalizationParams(1.0, 1.0)

    def test_three_points(self):
        p = zscore_fit(make_series([2.0, 4.0, 6.0]))
        assert p.mean == 4.0
        assert p.sd == pytest.approx(math.sqrt(8 / 3), abs=1e-15)
        assert p.sd == pytest.approx(1.632993, abs=1e-6)

    def test_constant_rejected(self):
        with pytest.raises(ZeroVariance):
            zscore_fit(make_series([5.0, 5.0, 5.0]))

    def test_single_value_rejected(self):
        with pytest.raises(TooFewObservations):
            zscore_fit(make_series([5.0]))

    def test_apply_by_hand(self):
        s = make_series([2.0, 4.0, 6.0])
        z = zscore_apply(s, zscore_fit(s))
        np.testing.assert_allclose(z.values, [-1.224745, 0, 1.224745], atol=1e-6)

    def test_apply_center_and_identity(self):
        assert zscore_apply(make_series([7.0]), NormalizationParams(7.0, 3.0)).values[0] == 0.0
        s = make_series([1.5, -2.0])
        assert zscore_apply(s, NormalizationParams(0.0, 1.0)) == s

    def test_invert_by_hand(self):
        z = make_series([-1.224745, 0, 1.224745])
        back = zscore_invert(z, NormalizationParams(4.0, 1.632993))
        np.testing.assert_allclose(back.values, [2, 4, 6], atol=1e-5)
        assert zscore_invert(make_series([0.0]), NormalizationParams(-3.0, 9.0)).values[0] == -3.0

    def test_roundtrip_random(self):
        rng = np.random.default_rng(0)
        s = make_series(rng.normal(50, 20, size=1000))
        p = zscore_fit(s)
        back = zscore_invert(zscore_apply(s, p), p)
        assert np.max(np.abs(back.values - s.values)) < 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=200))
    def test_standardized_moments(self, values):
        s = make_series(values)
        if np.std(s.values) < 1e-3:
            return
        z = zscore_apply(s, zscore_fit(s)).values
        assert abs(np.mean(z)) < 1e-9
        assert abs(np.std(z) - 1.0) < 1e-9


class TestTransformers:
    def test_pipeline(self):
        from sklearn.pipeline import make_pipeline

        pipe = make_pipeline(OutlierRemover(), LinearImputer(), ZScoreScaler())
        x = np.array([10, 11, np.nan, 11, 10, 1000, 12, 11.0])
        z = pipe.fit_transform(x)
        assert np.isfinite(z).all()
        assert abs(z.mean()) < 1e-12
        scaler = pipe[-1]
        np.testing.assert_allclose(scaler.inverse_transform(z)[[0, 1, 3]], [10, 11, 11])

    def test_get_params_and_clone(self):
        from sklearn.base import clone

        est = OutlierRemover(multiplier=1.5)
        assert est.get_params() == {"multiplier": 1.5}
        assert clone(est).multiplier == 1.5

    def test_unfitted_scaler(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            ZScoreScaler().transform([1.0, 2.0])
