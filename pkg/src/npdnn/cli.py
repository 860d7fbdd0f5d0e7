"""Command-line interface: synth, train, tune, predict, evaluate, export-components.

Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 data, 5 training, 6 tuning,
7 model format.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import tomli
import tomli_w

from . import evalmetrics, hpo
from ._random import derive_seed
from .exceptions import (
    ConfigError,
    DataError,
    ModelFormatError,
    NpDnnError,
    TrainingError,
    TuningError,
)
from .forecaster import Hyperparams, component_table, fit, forecast, load_model, save_model
from .preprocess import OutlierPolicy, impute_linear, remove_outliers
from .series_io import generate_synthetic, load_csv, write_csv, write_rows

log = logging.getLogger("npdnn")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_TRAIN, EXIT_TUNE, EXIT_MODEL = 0, 2, 3, 4, 5, 6, 7

SECTIONS = {"seed", "data", "preprocess", "model", "tune", "output"}
DATA_KEYS = {"path"}
PREPROCESS_KEYS = {"remove_outliers", "outlier_multiplier"}
MODEL_KEYS = (set(Hyperparams.__dataclass_fields__) - {"seed"}) | {"validation_fraction", "events"}
TUNE_KEYS = {"n_trials", "n_startup", "gamma", "n_candidates", "space"}
OUTPUT_KEYS = {"dir"}
SPACE_KEYS = {"kind", "low", "high", "choices"}


@dataclass
class RunConfig:
    seed: int = 0
    data_path: str = None
    remove_outliers: bool = True
    outlier_multiplier: float = 3.0
    model: dict = field(default_factory=dict)
    tune: dict = field(default_factory=dict)
    space: list = None
    output_dir: str = "."

    def hyperparams(self):
        """Model hyperparameters; the training seed is derived from the global seed."""
        params = {k: v for k, v in self.model.items() if k not in ("validation_fraction", "events")}
        if "hidden_dims" in params:
            params["hidden_dims"] = tuple(params["hidden_dims"])
        if "head_dims" in params:
            params["head_dims"] = tuple(params["head_dims"])
        return Hyperparams(seed=derive_seed(self.seed, "forecaster") >> 1, **params)

    @property
    def validation_fraction(self):
        return self.model.get("validation_fraction", 0.2)

    @property
    def events(self):
        return self.model.get("events")

    def study_config(self, n_trials=None):
        n_trials = n_trials or self.tune.get("n_trials", 20)
        return hpo.StudyConfig(
            n_trials=n_trials,
            n_startup=self.tune.get("n_startup", min(10, n_trials)),
            gamma=self.tune.get("gamma", 0.25),
            n_candidates=self.tune.get("n_candidates", 24),
            seed=derive_seed(self.seed, "tune") >> 1,
        )


def _reject_unknown(where, found, allowed):
    unknown = set(found) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _merge(base, extra):
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_space(raw):
    space = []
    for name, spec in raw.items():
        if not isinstance(spec, dict):
            raise ConfigError(f"tune.space.{name} must be a table")
        _reject_unknown(f"tune.space.{name}", spec, SPACE_KEYS)
        kind = spec.get("kind")
        if kind == "categorical":
            space.append(hpo.ParamSpec.categorical(name, spec.get("choices", ())))
        else:
            space.append(hpo.ParamSpec(name, kind, spec.get("low"), spec.get("high")))
    return space


def parse_config(doc):
    _reject_unknown("config", doc, SECTIONS)
    sections = {"data": DATA_KEYS, "preprocess": PREPROCESS_KEYS, "model": MODEL_KEYS,
                "tune": TUNE_KEYS, "output": OUTPUT_KEYS}
    for name, allowed in sections.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        _reject_unknown(f"[{name}]", section, allowed)
    cfg = RunConfig(
        seed=doc.get("seed", 0),
        data_path=doc.get("data", {}).get("path"),
        remove_outliers=doc.get("preprocess", {}).get("remove_outliers", True),
        outlier_multiplier=doc.get("preprocess", {}).get("outlier_multiplier", 3.0),
        model=dict(doc.get("model", {})),
        tune={k: v for k, v in doc.get("tune", {}).items() if k != "space"},
        output_dir=doc.get("output", {}).get("dir", "."),
    )
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    if "space" in doc.get("tune", {}):
        cfg.space = _parse_space(doc["tune"]["space"])
    m = cfg.outlier_multiplier
    if isinstance(m, bool) or not isinstance(m, (int, float)) or not m > 0:
        raise ConfigError("preprocess.outlier_multiplier must be a positive number")
    # surface hyperparameter errors before any data is read
    cfg.hyperparams()
    vf = cfg.validation_fraction
    if not (isinstance(vf, (int, float)) and 0 < vf <= 0.5):
        raise ConfigError(f"model.validation_fraction={vf!r} outside (0, 0.5]")
    return cfg


def load_config(paths):
    doc = {}
    for path in paths or ():
        try:
            with open(path, "rb") as fh:
                doc = _merge(doc, tomli.load(fh))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc)


def prepare_series(path, cfg):
    """Load, drop outliers, and impute onto a daily grid."""
    raw = load_csv(path)
    if cfg.remove_outliers and raw.n_present >= 4:
        raw, n_removed = remove_outliers(raw, OutlierPolicy(multiplier=cfg.outlier_multiplier),
                                         return_count=True)
        if n_removed:
            log.info("removed %d outlier(s)", n_removed)
    return impute_linear(raw)


def _out_path(args_out, cfg, default_name):
    if args_out:
        return Path(args_out)
    return Path(cfg.output_dir) / default_name


def _data_path(args, cfg):
    path = args.data or cfg.data_path
    if not path:
        raise ConfigError("no data file: set [data] path or pass --data")
    return path


def cmd_synth(args):
    if args.len is None or args.len <= 0:
        raise ConfigError("--len must be a positive integer")
    series = generate_synthetic(
        slope=args.slope, amplitude=args.amplitude, period=args.period,
        noise_sd=args.noise_sd, length=args.len, seed=args.seed,
        origin=args.origin,
    )
    write_csv(series, args.output)
    print(f"wrote {len(series)} rows to {args.output}")


def cmd_train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    series = prepare_series(_data_path(args, cfg), cfg)
    model, report = fit(series, cfg.hyperparams(), cfg.validation_fraction, cfg.events)
    model_path = _out_path(args.output, cfg, "model.json")
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, model_path)
    # re-read to confirm the file passes the load-time invariant checks
    load_model(model_path)
    report_path = Path(args.report) if args.report else model_path.with_name(model_path.stem + "_report.csv")
    rows = [
        (i + 1, repr(tr), repr(va))
        for i, (tr, va) in enumerate(zip(report.loss_history, report.validation_history))
    ]
    write_rows(report_path, ("epoch", "train_loss", "validation_loss"), rows)
    print(f"epochs: {report.epochs_run}")
    print(f"final train loss: {report.final_train_loss:.6g}")
    print(f"final validation loss: {report.final_validation_loss:.6g}")
    print(f"model written to {model_path}")


def _best_params_doc(cfg, hyperparams):
    model = {k: v for k, v in asdict(hyperparams).items() if k != "seed"}
    model["hidden_dims"] = list(model["hidden_dims"])
    model["head_dims"] = list(model["head_dims"])
    model["validation_fraction"] = cfg.validation_fraction
    if cfg.events:
        model["events"] = cfg.events
    doc = {"seed": cfg.seed}
    if cfg.data_path:
        doc["data"] = {"path": cfg.data_path}
    doc["preprocess"] = {"remove_outliers": cfg.remove_outliers,
                         "outlier_multiplier": cfg.outlier_multiplier}
    doc["model"] = model
    doc["output"] = {"dir": cfg.output_dir}
    return doc


def cmd_tune(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    study = cfg.study_config(args.trials)
    space = cfg.space or list(hpo.DEFAULT_SPACE)
    series = prepare_series(_data_path(args, cfg), cfg)
    result = hpo.tune_forecaster(
        series, space, study, base=cfg.hyperparams(),
        validation_fraction=cfg.validation_fraction, events=cfg.events, n_jobs=args.parallel,
    )
    best_path = _out_path(args.output, cfg, "best_params.toml")
    best_path.parent.mkdir(parents=True, exist_ok=True)
    with open(best_path, "wb") as fh:
        tomli_w.dump(_best_params_doc(cfg, result.hyperparams), fh)
    log_path = Path(args.log) if args.log else best_path.with_name("study_log.csv")
    hpo.write_study_log(result.trials, space, log_path)
    print(f"best trial {result.best.id}: objective {result.best.objective:.6g}")
    for name, value in result.best.params.items():
        print(f"  {name} = {value}")
    print(f"best params written to {best_path}")


def cmd_predict(args):
    model = load_model(args.model)
    history = impute_linear(load_csv(args.history))
    result = forecast(model, history, args.horizon)
    rows = [(d.isoformat(), repr(float(v))) for d, v in zip(result.dates, result.values)]
    write_rows(args.output, ("ds", "yhat"), rows)
    print(f"wrote {len(rows)} forecast rows to {args.output}")


def cmd_evaluate(args):
    predicted = load_csv(args.forecast, value_column="yhat")
    actual = load_csv(args.actual)
    actual_by_date = dict(zip(actual.timestamps, actual.values))
    pairs = [
        (p, actual_by_date[d])
        for d, p in zip(predicted.timestamps, predicted.values)
        if d in actual_by_date and p == p and actual_by_date[d] == actual_by_date[d]
    ]
    if not pairs:
        raise DataError("forecast and actual series share no dates")
    report = evalmetrics.evaluate([p for p, _ in pairs], [a for _, a in pairs])
    print(report.to_table())
    if args.output:
        report.write_csv(args.output)


def cmd_export_components(args):
    model = load_model(args.model)
    history = impute_linear(load_csv(args.history)).values if args.history else None
    stop = args.stop if args.stop is not None else model.train_len
    if not 0 <= args.start < stop:
        raise ConfigError(f"empty index range [{args.start}, {stop})")
    table = component_table(model, range(args.start, stop), history)
    cols = ("t", "trend", "seasonal", "events", "ar_residual", "total")
    rows = [
        (int(table["t"][i]), *(repr(float(table[c][i])) for c in cols[1:]))
        for i in range(len(table["t"]))
    ]
    write_rows(args.output, cols, rows)
    print(f"wrote {len(rows)} component rows to {args.output}")


def build_parser():
    parser = argparse.ArgumentParser(prog="npdnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic trend + sine series")
    p.add_argument("--slope", type=float, default=0.0)
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--period", type=float, default=12.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--origin", type=dt.date.fromisoformat, default=dt.date(2020, 1, 1))
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="preprocess a series and fit a model")
    p.add_argument("--config", action="append", help="TOML config; repeat to overlay files")
    p.add_argument("--data")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", help="model JSON path")
    p.add_argument("--report", help="per-epoch loss CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="search hyperparameters with TPE")
    p.add_argument("--config", action="append")
    p.add_argument("--data")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    p.add_argument("-o", "--output", help="best-params TOML path")
    p.add_argument("--log", help="study log CSV path")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="recursive forecast after a history file")
    p.add_argument("--model", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="compare a forecast CSV with actual values")
    p.add_argument("--forecast", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("-o", "--output", help="metric,value CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-components", help="per-index additive decomposition")
    p.add_argument("--model", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--stop", type=int, help="exclusive end index (default: training length)")
    p.add_argument("--history", help="series used for the autoregressive column")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export_components)
    return parser


def _exit_code(exc):
    if isinstance(exc, ModelFormatError):
        return EXIT_MODEL
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, TrainingError):
        return EXIT_TRAIN
    if isinstance(exc, TuningError):
        return EXIT_TUNE
    return EXIT_DATA


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except NpDnnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
