"""Hyperparameter search with an independent Tree-structured Parzen Estimator.

The first ``n_startup`` completed trials are drawn uniformly. After that each
dimension is sampled separately: completed trials are split into the best
``ceil(gamma * n)`` ("good") and the rest ("bad"), a Parzen density is fitted
to each group, and of ``n_candidates`` draws from the good density the one
maximizing ``l(x) / g(x)`` wins.
"""

from __future__ import annotations

import math
import numbers
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from ._random import make_rng
from ._validation import check_int, check_real
from .exceptions import (
    AllTrialsFailed,
    BadHyperparams,
    ConfigError,
    EmptySpace,
    InconsistentHistory,
    NpDnnError,
)
from .series_io import write_rows

KINDS = ("uniform", "log_uniform", "int", "categorical")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    low: float = None
    high: float = None
    choices: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"{self.name}: unknown parameter kind {self.kind!r}")
        if self.kind == "categorical":
            object.__setattr__(self, "choices", tuple(self.choices))
            if not self.choices:
                raise ConfigError(f"{self.name}: categorical needs at least one choice")
            return
        if self.low is None or self.high is None or not self.low < self.high:
            # a single-point range is allowed for integers only, lo == hi
            if not (self.kind == "int" and self.low is not None and self.low == self.high):
                raise ConfigError(f"{self.name}: need low < high, got [{self.low}, {self.high}]")
        if self.kind == "log_uniform" and not self.low > 0:
            raise ConfigError(f"{self.name}: log-uniform range must be positive")
        if self.kind == "int":
            object.__setattr__(self, "low", check_int(self.name, self.low))
            object.__setattr__(self, "high", check_int(self.name, self.high))

    @classmethod
    def uniform(cls, name, low, high):
        return cls(name, "uniform", float(low), float(high))

    @classmethod
    def log_uniform(cls, name, low, high):
        return cls(name, "log_uniform", float(low), float(high))

    @classmethod
    def integer(cls, name, low, high):
        return cls(name, "int", low, high)

    @classmethod
    def categorical(cls, name, choices):
        return cls(name, "categorical", choices=tuple(choices))

    @property
    def bounds(self):
        """Bounds of the continuous search coordinate."""
        if self.kind == "log_uniform":
            return math.log(self.low), math.log(self.high)
        return float(self.low), float(self.high)

    def to_internal(self, value):
        return math.log(value) if self.kind == "log_uniform" else float(value)

    def from_internal(self, x):
        lo, hi = self.bounds
        x = min(max(float(x), lo), hi)
        if self.kind == "log_uniform":
            return min(max(math.exp(x), self.low), self.high)
        if self.kind == "int":
            return int(min(max(round(x), self.low), self.high))
        return x

    def contains(self, value):
        if self.kind == "categorical":
            return value in self.choices
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            return False
        if self.kind == "int" and int(value) != value:
            return False
        return self.low <= value <= self.high


@dataclass
class Trial:
    id: int
    params: dict
    objective: float = None
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"


@dataclass(frozen=True)
class StudyConfig:
    n_trials: int = 50
    n_startup: int = 10
    gamma: float = 0.25
    n_candidates: int = 24
    seed: int = 0

    def __post_init__(self):
        check_int("n_trials", self.n_trials, 1)
        check_int("n_startup", self.n_startup, 1, self.n_trials)
        check_real("gamma", self.gamma, 0.0, 1.0, low_open=True)
        if self.gamma >= 1.0:
            raise BadHyperparams("gamma must be below 1")
        check_int("n_candidates", self.n_candidates, 1)
        check_int("seed", self.seed)


def split_good_bad(trials, gamma):
    """Best ``ceil(gamma * n)`` completed trials and the rest; ties go to the lower id."""
    ranked = sorted(trials, key=lambda t: (t.objective, t.id))
    n_good = min(len(ranked), max(1, math.ceil(gamma * len(ranked))))
    return ranked[:n_good], ranked[n_good:]


class ParzenEstimator:
    """Equal-weight mixture of Gaussians truncated to ``[low, high]``.

    Bandwidth follows Scott's rule ``std * n**(-1/5)``, clipped to
    ``[(high - low) / min(100, n + 1), high - low]``.
    """

    def __init__(self, points, low, high):
        self.mus = np.asarray(points, dtype=float)
        self.low, self.high = float(low), float(high)
        width = self.high - self.low
        n = len(self.mus)
        sd = float(np.std(self.mus, ddof=1)) if n > 1 else 0.0
        bw = sd * n ** (-0.2)
        self.sigma = float(np.clip(bw, width / min(100.0, n + 1.0), width))
        a = (self.low - self.mus) / self.sigma
        b = (self.high - self.mus) / self.sigma
        self._cdf_lo = ndtr(a)
        self._cdf_hi = ndtr(b)
        self._log_mass = np.log(np.maximum(self._cdf_hi - self._cdf_lo, 1e-300))

    def sample(self, rng, size):
        comp = rng.integers(len(self.mus), size=size)
        u = rng.uniform(self._cdf_lo[comp], self._cdf_hi[comp])
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        x = self.mus[comp] + self.sigma * ndtri(u)
        return np.clip(x, self.low, self.high)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)[:, None]
        z = (x - self.mus[None, :]) / self.sigma
        log_comp = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(self.sigma) - self._log_mass
        m = log_comp.max(axis=1, keepdims=True)
        return (m + np.log(np.mean(np.exp(log_comp - m), axis=1, keepdims=True)))[:, 0]


class _Uniform:
    def __init__(self, low, high):
        self.low, self.high = low, high

    def log_pdf(self, x):
        return np.full(len(x), -math.log(self.high - self.low))


def _check_space(space):
    space = list(space)
    if not space:
        raise EmptySpace("search space has no parameters")
    names = [p.name for p in space]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate parameter names in {names}")
    return space


def _check_history(space, history):
    names = {p.name for p in space}
    for trial in history:
        if set(trial.params) != names:
            raise InconsistentHistory(f"trial {trial.id} params {sorted(trial.params)} != {sorted(names)}")
        for p in space:
            if not p.contains(trial.params[p.name]):
                raise InconsistentHistory(
                    f"trial {trial.id}: {p.name}={trial.params[p.name]!r} outside its range"
                )
        if trial.ok and not (trial.objective is not None and math.isfinite(trial.objective)):
            raise InconsistentHistory(f"trial {trial.id} is ok but has no finite objective")


def _sample_uniform(spec, rng):
    if spec.kind == "categorical":
        return spec.choices[int(rng.integers(len(spec.choices)))]
    lo, hi = spec.bounds
    if spec.kind == "int":
        return int(rng.integers(spec.low, spec.high + 1))
    return spec.from_internal(rng.uniform(lo, hi))


def _categorical_probs(spec, trials):
    counts = np.ones(len(spec.choices))
    for t in trials:
        counts[spec.choices.index(t.params[spec.name])] += 1
    return counts / counts.sum()


def _sample_tpe(spec, good, bad, rng, n_candidates):
    if spec.kind == "categorical":
        p_good = _categorical_probs(spec, good)
        p_bad = _categorical_probs(spec, bad)
        cands = rng.choice(len(spec.choices), size=n_candidates, p=p_good)
        score = np.log(p_good[cands]) - np.log(p_bad[cands])
        return spec.choices[int(cands[int(np.argmax(score))])]
    lo, hi = spec.bounds
    if spec.kind == "int":
        # continuous relaxation over the integer cells
        lo, hi = lo - 0.5, hi + 0.5
    l_est = ParzenEstimator([spec.to_internal(t.params[spec.name]) for t in good], lo, hi)
    if bad:
        g_est = ParzenEstimator([spec.to_internal(t.params[spec.name]) for t in bad], lo, hi)
    else:
        g_est = _Uniform(lo, hi)
    cands = l_est.sample(rng, n_candidates)
    score = l_est.log_pdf(cands) - g_est.log_pdf(cands)
    return spec.from_internal(cands[int(np.argmax(score))])


def suggest(space, history, config, trial_id):
    """Propose parameters for ``trial_id`` given the trials seen so far."""
    space = _check_space(space)
    _check_history(space, history)
    completed = [t for t in history if t.ok]
    rng = make_rng(config.seed, "suggest", trial_id)
    if len(completed) < config.n_startup:
        return {spec.name: _sample_uniform(spec, rng) for spec in space}
    good, bad = split_good_bad(completed, config.gamma)
    return {spec.name: _sample_tpe(spec, good, bad, rng, config.n_candidates) for spec in space}


def _evaluate(objective, trial_id, params):
    value = objective(dict(params))
    try:
        value = float(value)
    except (TypeError, ValueError):
        value = math.nan
    if math.isfinite(value):
        return Trial(trial_id, params, value, "ok")
    return Trial(trial_id, params, None, "failed")


def best_trial(trials):
    ok = [t for t in trials if t.ok]
    if not ok:
        raise AllTrialsFailed(f"all {len(trials)} trials failed")
    return min(ok, key=lambda t: (t.objective, t.id))


def run_study(objective, space, config, n_jobs=1):
    """Evaluate ``config.n_trials`` suggestions; return ``(best_trial, trials)``.

    Non-finite objective values mark a trial as failed; failed trials are kept
    in the log but ignored by the sampler. With ``n_jobs > 1`` trials run on a
    thread pool and each suggestion sees only the trials finished at dispatch
    time, so results depend on scheduling; ``n_jobs=1`` is reproducible.
    """
    space = _check_space(space)
    trials = []
    if n_jobs <= 1:
        for trial_id in range(config.n_trials):
            params = suggest(space, trials, config, trial_id)
            trials.append(_evaluate(objective, trial_id, params))
        return best_trial(trials), trials

    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        pending = set()
        next_id = 0
        while next_id < config.n_trials or pending:
            while next_id < config.n_trials and len(pending) < n_jobs:
                params = suggest(space, trials, config, next_id)
                pending.add(pool.submit(_evaluate, objective, next_id, params))
                next_id += 1
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            trials.extend(f.result() for f in done)
    trials.sort(key=lambda t: t.id)
    return best_trial(trials), trials


def write_study_log(trials, space, path):
    """CSV ``trial_id,<param columns>,objective,status`` in trial-id order."""
    names = [p.name for p in space]
    rows = []
    for t in sorted(trials, key=lambda t: t.id):
        objective = "" if t.objective is None else repr(float(t.objective))
        rows.append([t.id, *(t.params[n] for n in names), objective, t.status])
    write_rows(path, ["trial_id", *names, "objective", "status"], rows)


DEFAULT_SPACE = (
    ParamSpec.log_uniform("learning_rate", 1e-4, 1e-1),
    ParamSpec.integer("lag_count", 2, 30),
    ParamSpec.integer("hidden_width", 4, 64),
    ParamSpec.integer("fourier_order", 1, 10),
    ParamSpec.integer("changepoint_count", 0, 16),
)


def apply_params(base, params):
    """Overlay sampled values on a ``Hyperparams``; ``hidden_width`` sets a one-layer extractor."""
    changes = dict(params)
    if "hidden_width" in changes:
        changes["hidden_dims"] = (int(changes.pop("hidden_width")),)
    return base.replace(**changes)


@dataclass
class TuneResult:
    hyperparams: object
    best: Trial
    trials: list = field(default_factory=list)


def tune_forecaster(series, space=DEFAULT_SPACE, config=StudyConfig(), base=None,
                    validation_fraction=0.2, events=None, n_jobs=1):
    """Search ``space`` for the lowest final validation MSE of :func:`forecaster.fit`.

    ``base`` supplies every hyperparameter not in the space, including the
    fixed training seed. Fit errors from this package count as failed trials.
    """
    from .forecaster import Hyperparams, fit

    base = base or Hyperparams()
    space = _check_space(space)
    for spec in space:
        if spec.name != "hidden_width" and spec.name not in Hyperparams.__dataclass_fields__:
            raise ConfigError(f"unknown hyperparameter {spec.name!r} in search space")

    def objective(params):
        try:
            hp = apply_params(base, params)
            _, report = fit(series, hp, validation_fraction, events)
        except NpDnnError:
            return math.nan
        return report.final_validation_loss

    best, trials = run_study(objective, space, config, n_jobs=n_jobs)
    return TuneResult(apply_params(base, best.params), best, trials)
