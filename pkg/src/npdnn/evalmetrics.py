"""Direction-classification and point-error metrics.

Labels are next-step moves: ``up`` when the value rises, ``down`` otherwise
(a flat step counts as ``down``). ``up`` is the positive class. Metrics whose
denominator is zero come back as ``None`` and are written as ``NA``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._validation import as_value_array
from .exceptions import LengthMismatch, TooFewObservations
from .series_io import write_rows

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0 or self.total < 1:
            raise ValueError(f"invalid confusion counts {self}")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalReport:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    rmse: float
    mae: float

    def rows(self):
        return [(name, format_metric(value)) for name, value in asdict(self).items()]

    def to_table(self):
        width = max(len(name) for name in self.__dataclass_fields__)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in self.rows())

    def write_csv(self, path):
        write_rows(path, ("metric", "value"), self.rows())


def format_metric(value):
    return "NA" if value is None else repr(float(value))


def direction_labels(series):
    values = as_value_array(series)
    if len(values) < 2:
        raise TooFewObservations("direction labels need at least 2 values")
    return [UP if b > a else DOWN for a, b in zip(values, values[1:])]


def confusion(predicted, actual):
    if len(predicted) != len(actual):
        raise LengthMismatch(f"{len(predicted)} predicted vs {len(actual)} actual labels")
    if not predicted:
        raise LengthMismatch("no labels to compare")
    tp = fp = tn = fn = 0
    for p, a in zip(predicted, actual):
        if p == UP:
            if a == UP:
                tp += 1
            else:
                fp += 1
        elif a == UP:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num, den):
    return num / den if den else None


def accuracy(cm):
    # correct predictions of either class over all predictions
    return _ratio(cm.tp + cm.tn, cm.total)


def precision(cm):
    return _ratio(cm.tp, cm.tp + cm.fp)


def recall(cm):
    return _ratio(cm.tp, cm.tp + cm.fn)


def f1(cm):
    p, r = precision(cm), recall(cm)
    if p is None or r is None:
        return None
    return _ratio(2.0 * p * r, p + r)


def _pair(predicted, actual):
    p, a = as_value_array(predicted), as_value_array(actual)
    if len(p) != len(a):
        raise LengthMismatch(f"{len(p)} predictions vs {len(a)} actual values")
    if len(p) == 0:
        raise LengthMismatch("empty series")
    return p, a


def rmse(predicted, actual):
    p, a = _pair(predicted, actual)
    diff = np.abs(p - a)
    scale = diff.max()
    if scale == 0 or not np.isfinite(scale):
        return float(scale)
    # rescale so tiny or huge errors neither underflow nor overflow when squared
    return float(scale * np.sqrt(np.mean((diff / scale) ** 2)))


def mae(predicted, actual):
    p, a = _pair(predicted, actual)
    return float(np.mean(np.abs(p - a)))


def evaluate(predicted, actual):
    """Direction metrics on next-step labels plus RMSE/MAE on the raw values."""
    p, a = _pair(predicted, actual)
    if len(p) >= 2:
        cm = confusion(direction_labels(p), direction_labels(a))
        cls = (accuracy(cm), precision(cm), recall(cm), f1(cm))
    else:
        cls = (None, None, None, None)
    return EvalReport(*cls, rmse=rmse(p, a), mae=mae(p, a))
