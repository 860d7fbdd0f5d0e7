"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured values
and the tolerance they were held to, then asserts the same condition.
Run ``pytest tests/test_acceptance.py -v`` to see the lines.
"""

import csv
import datetime as dt
import json
import time

import numpy as np
import pytest

from npdnn.cli import main
from npdnn.decomposition import component_gradients
from npdnn.evalmetrics import ConfusionMatrix, accuracy, evaluate, f1, mae, precision, recall, rmse
from npdnn.forecaster import Hyperparams, component_table, fit, forecast, load_model, predict_in_sample, save_model
from npdnn.hpo import ParamSpec, StudyConfig, run_study
from npdnn.neuralnet import ACTIVATIONS, backward, forward, init_network
from npdnn.preprocess import impute_linear, zscore_apply, zscore_fit, zscore_invert
from npdnn.series_io import RawSeries, TimeSeries, generate_synthetic

from oracles import central_diff, grads_agree, net_loss_ref
from test_decomposition import fd_component_grads, flatten, random_components

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def report(number, title, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'X'}]" for text, passed in checks)
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")
        assert ok, detail

    return report


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def test_c1_network_gradient_oracle(verdict):
    def run():
        failures = 0
        kinds_seen = set()
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            depth = int(rng.integers(1, 4))
            dims = [int(d) for d in rng.integers(2, 8, size=depth + 1)]
            # cycle the output kind so every activation is exercised
            kinds = [str(rng.choice(ACTIVATIONS[:4])) for _ in range(depth - 1)]
            kinds.append(ACTIVATIONS[seed % len(ACTIVATIONS)])
            kinds_seen.update(kinds)
            net = init_network(dims, kinds, seed)
            for layer in net.layers:
                layer.bias[:] = rng.normal(0, 0.3, size=layer.out_dim)
            x = rng.normal(size=dims[0])
            loss = "cross_entropy" if kinds[-1] == "softmax" and seed % 2 else "mse"
            target = np.eye(dims[-1])[rng.integers(dims[-1])] if loss == "cross_entropy" else rng.normal(size=dims[-1])
            _, grads = backward(net, forward(net, x), target, loss)
            weights = [layer.weights for layer in net.layers]
            biases = [layer.bias for layer in net.layers]
            numeric = central_diff(lambda: net_loss_ref(weights, biases, kinds, x, target, loss),
                                   weights + biases, eps=1e-5)
            failures += not grads_agree(grads.weights + grads.biases, numeric, rel=1e-4, abs_floor=1e-6)
        return failures, kinds_seen

    (failures, kinds), elapsed = timed(run)
    verdict(1, "network gradient oracle", [
        (f"{20 - failures}/20 nets match finite differences (1e-4 rel / 1e-6 abs)", failures == 0),
        (f"activations covered {sorted(kinds)}", kinds == set(ACTIVATIONS)),
        (f"{elapsed:.2f}s < 5s", elapsed < 5),
    ])


def test_c2_component_gradient_oracle(verdict):
    def run():
        worst = 0.0
        for draw in range(100):
            rng = np.random.default_rng(5000 + draw)
            comps = random_components(rng)
            t = float(rng.integers(0, 100)) + float(rng.uniform(0.1, 0.9))
            upstream = float(rng.normal())
            analytic = flatten(component_gradients(t, comps, upstream))
            numeric = fd_component_grads(t, comps, upstream)
            scale = np.maximum(np.abs(analytic), 1.0)
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
        return worst

    worst, elapsed = timed(run)
    verdict(2, "component gradient oracle", [
        (f"worst relative error {worst:.2e} <= 1e-6 over 100 draws", worst <= 1e-6),
        (f"{elapsed:.2f}s < 2s", elapsed < 2),
    ])


def test_c3_preprocessing_exactness(verdict):
    def run():
        rng = np.random.default_rng(7)
        n = 500
        x = np.arange(n, dtype=float)
        truth = 3.25 - 0.75 * x
        values = truth.copy()
        holes = rng.choice(np.arange(1, n - 1), size=150, replace=False)
        values[holes] = np.nan
        start = dt.date(2020, 1, 1)
        raw = RawSeries([start + dt.timedelta(days=i) for i in range(n)], values)
        impute_err = float(np.max(np.abs(impute_linear(raw).values - truth)))

        series = TimeSeries(start, rng.normal(100, 25, size=2000))
        params = zscore_fit(series)
        z = zscore_apply(series, params)
        roundtrip_err = float(np.max(np.abs(zscore_invert(z, params).values - series.values)))
        return impute_err, roundtrip_err, abs(float(np.mean(z.values))), abs(float(np.std(z.values)) - 1)

    (imp, rt, mean, sd), elapsed = timed(run)
    verdict(3, "preprocessing exactness", [
        (f"imputation error {imp:.1e} < 1e-12", imp < 1e-12),
        (f"z-score roundtrip {rt:.1e} < 1e-9", rt < 1e-9),
        (f"|mean| {mean:.1e} < 1e-9", mean < 1e-9),
        (f"|sd - 1| {sd:.1e} < 1e-9", sd < 1e-9),
        (f"{elapsed:.2f}s < 1s", elapsed < 1),
    ])


def test_c4_synthetic_recovery(verdict):
    def run():
        series = generate_synthetic(slope=0.5, amplitude=10, period=12, noise_sd=0.1, length=500, seed=42)
        model, _ = fit(series, Hyperparams(seasonality_period=12))
        fitted = predict_in_sample(model, series).series.values
        n_val = 100
        val_rmse = rmse(fitted[-n_val:], series.values[-n_val:])
        seasonal = component_table(model, np.arange(500), history=series)["seasonal"]
        amplitude = (seasonal.max() - seasonal.min()) / 2
        drift = float(np.max(np.abs(seasonal[12:] - seasonal[:-12])))
        return val_rmse, amplitude, drift

    (val_rmse, amplitude, drift), elapsed = timed(run)
    amp_err = abs(amplitude - 10) / 10
    verdict(4, "synthetic recovery", [
        (f"validation rmse {val_rmse:.4f} <= 0.3", val_rmse <= 0.3),
        (f"seasonal amplitude {amplitude:.3f} vs 10, error {amp_err:.2%} <= 5%", amp_err <= 0.05),
        (f"12-step drift {drift:.1e} <= 5% of amplitude", drift <= 0.05 * amplitude),
        (f"{elapsed:.2f}s < 60s", elapsed < 60),
    ])


def test_c5_forecast_sanity(verdict):
    def run():
        line = TimeSeries(dt.date(2020, 1, 1), np.arange(200.0))
        model, _ = fit(line, Hyperparams(epochs=500, seed=1))
        fc = forecast(model, line, 10).values
        truth = np.arange(200.0, 210.0)
        rel = float(np.max(np.abs(fc - truth) / truth))
        prefix = all(
            forecast(model, line, h).values.tobytes() == fc[:h].tobytes() for h in range(1, 10)
        )
        return rel, prefix

    (rel, prefix), elapsed = timed(run)
    verdict(5, "forecast sanity", [
        (f"max relative error {rel:.2e} < 2%", rel < 0.02),
        ("recursion prefix bitwise equal for h=1..9", prefix),
        (f"{elapsed:.2f}s < 10s", elapsed < 10),
    ])


def test_c6_hpo_convergence(verdict):
    space = [ParamSpec.uniform("x", -10, 10)]

    def objective(p):
        return (p["x"] - 2.0) ** 2

    def run():
        hits, best, startup_best = 0, [], []
        for seed in range(20):
            cfg = StudyConfig(n_trials=50, n_startup=10, seed=seed)
            top, trials = run_study(objective, space, cfg)
            hits += abs(top.params["x"] - 2.0) < 0.1
            best.append(top.objective)
            startup_best.append(min(t.objective for t in trials[: cfg.n_startup]))
        return hits, float(np.median(best)), float(np.median(startup_best))

    (hits, med_best, med_startup), elapsed = timed(run)
    verdict(6, "HPO convergence", [
        (f"{hits}/20 seeds with |x-2| < 0.1 (need >= 18)", hits >= 18),
        (f"median best {med_best:.2e} < median startup best {med_startup:.2e}", med_best < med_startup),
        (f"{elapsed:.2f}s < 10s", elapsed < 10),
    ])


def test_c7_metrics_exactness(verdict):
    def run():
        cm = ConfusionMatrix(tp=5, fp=1, tn=3, fn=1)
        values = (accuracy(cm), precision(cm), recall(cm), f1(cm))
        rng = np.random.default_rng(0)
        violations = 0
        for _ in range(1000):
            n = int(rng.integers(1, 50))
            p, a = rng.normal(size=n) * 10, rng.normal(size=n) * 10
            violations += rmse(p, a) < mae(p, a)
        return values, violations

    ((acc, prec, rec, f), violations), elapsed = timed(run)
    verdict(7, "metrics exactness", [
        (f"accuracy {acc:.4f} == 0.8000", abs(acc - 0.8) < 5e-5),
        (f"precision {prec:.4f} recall {rec:.4f} f1 {f:.4f} within 5e-5 of 0.8333",
         all(abs(v - 0.8333) < 5e-5 for v in (prec, rec, f))),
        (f"rmse >= mae violations {violations}/1000", violations == 0),
        (f"{elapsed:.2f}s < 1s", elapsed < 1),
    ])


def test_c8_direction_accuracy(verdict):
    def run():
        t = np.arange(300.0)
        values = 10 + 0.5 * t + 0.4 * np.sin(2 * np.pi * t / 7)
        assert np.all(np.diff(values) > 0)
        series = TimeSeries(dt.date(2020, 1, 1), values)
        train = TimeSeries(series.origin, values[:250])
        model, report = fit(train, Hyperparams(seasonality_period=7, epochs=1000, seed=3))
        fc = forecast(model, train, 50).values
        joined_pred = np.concatenate([[values[249]], fc])
        joined_true = values[249:]
        return evaluate(joined_pred, joined_true).accuracy, report.final_validation_loss

    (acc, val_loss), elapsed = timed(run)
    verdict(8, "direction accuracy", [
        (f"accuracy {acc:.3f} >= 0.95 over 50 forecast steps", acc >= 0.95),
        (f"converged: validation mse {val_loss:.1e} < 1e-3", val_loss < 1e-3),
        (f"{elapsed:.2f}s < 30s", elapsed < 30),
    ])


PIPELINE_CONFIG = """\
seed = 2024

[data]
path = "series.csv"

[model]
epochs = 200
seasonality_period = 12.0

[tune]
n_trials = 5

[tune.space.learning_rate]
kind = "log_uniform"
low = 0.001
high = 0.1

[tune.space.lag_count]
kind = "int"
low = 2
high = 12

[output]
dir = "out"
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _pipeline(root, monkeypatch):
    root.mkdir()
    monkeypatch.chdir(root)
    (root / "run.toml").write_text(PIPELINE_CONFIG)
    codes = []

    def cli(*args):
        codes.append(main(list(args)))

    cli("synth", "--slope", "0.5", "--amplitude", "10", "--period", "12", "--noise-sd", "0.1",
        "--len", "240", "--seed", "42", "-o", str(root / "series.csv"))
    cli("synth", "--slope", "0.5", "--amplitude", "10", "--period", "12", "--noise-sd", "0.1",
        "--len", "252", "--seed", "42", "-o", str(root / "actual.csv"))
    cli("tune", "--config", str(root / "run.toml"))
    cli("train", "--config", str(root / "out" / "best_params.toml"))
    cli("predict", "--model", str(root / "out" / "model.json"), "--history", str(root / "series.csv"),
        "--horizon", "12", "-o", str(root / "out" / "forecast.csv"))
    cli("evaluate", "--forecast", str(root / "out" / "forecast.csv"), "--actual", str(root / "actual.csv"),
        "-o", str(root / "out" / "metrics.csv"))
    cli("export-components", "--model", str(root / "out" / "model.json"), "--history",
        str(root / "series.csv"), "-o", str(root / "out" / "components.csv"))
    return codes


def _schema_problems(out):
    problems = []
    log = _rows(out / "study_log.csv")
    if log[0] != ["trial_id", "learning_rate", "lag_count", "objective", "status"] or len(log) != 6:
        problems.append("study_log.csv")
    load_model(out / "model.json")
    report = _rows(out / "model_report.csv")
    if report[0] != ["epoch", "train_loss", "validation_loss"] or len(report) < 2:
        problems.append("model_report.csv")
    fc = _rows(out / "forecast.csv")
    dates = [dt.date.fromisoformat(r[0]) for r in fc[1:]]
    if fc[0] != ["ds", "yhat"] or len(dates) != 12 or any((b - a).days != 1 for a, b in zip(dates, dates[1:])):
        problems.append("forecast.csv")
    metrics = _rows(out / "metrics.csv")
    if [r[0] for r in metrics] != ["metric", "accuracy", "precision", "recall", "f1", "rmse", "mae"]:
        problems.append("metrics.csv")
    comps = _rows(out / "components.csv")
    if comps[0] != ["t", "trend", "seasonal", "events", "ar_residual", "total"]:
        problems.append("components.csv header")
    for row in comps[1:]:
        parts = [float(v) for v in row[1:]]
        if abs(sum(parts[:4]) - parts[4]) > 1e-9 * max(1.0, abs(parts[4])):
            problems.append("components.csv row sum")
            break
    return problems


def test_c9_end_to_end_cli(verdict, tmp_path, monkeypatch):
    def run():
        first = _pipeline(tmp_path / "a", monkeypatch)
        problems = _schema_problems(tmp_path / "a" / "out")
        second = _pipeline(tmp_path / "b", monkeypatch)
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        differing = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
        return first, second, problems, differing, len(files)

    (first, second, problems, differing, n_files), elapsed = timed(run)
    verdict(9, "end-to-end CLI", [
        (f"exit codes {first}", first == [0] * 7),
        (f"rerun exit codes {second}", second == [0] * 7),
        (f"schema problems {problems or 'none'}", not problems),
        (f"{n_files} files byte-identical on rerun, differing {differing or 'none'}", not differing),
        (f"{elapsed:.1f}s < 120s", elapsed < 120),
    ])


def test_c10_serialization(verdict, tmp_path):
    line = TimeSeries(dt.date(2020, 1, 1), np.linspace(5, 25, 120) + np.sin(np.arange(120.0)))
    model, _ = fit(line, Hyperparams(epochs=50, seed=9))
    probe = TimeSeries(dt.date(2021, 1, 1), np.cos(np.arange(30.0)) * 3 + 10)
    history = tmp_path / "probe.csv"
    from npdnn.series_io import write_csv

    write_csv(probe, history)

    def run():
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        bitwise = forecast(model, probe, 15).values.tobytes() == forecast(loaded, probe, 15).values.tobytes()

        corrupt = tmp_path / "corrupt.json"
        corrupt.write_text(path.read_text()[: len(path.read_text()) // 3])
        data = json.loads(path.read_text())
        data["version"] = 999
        bumped = tmp_path / "bumped.json"
        bumped.write_text(json.dumps(data))
        codes = [
            main(["predict", "--model", str(p), "--history", str(history), "--horizon", "3",
                  "-o", str(tmp_path / "f.csv")])
            for p in (path, corrupt, bumped)
        ]
        return bitwise, codes

    (bitwise, codes), elapsed = timed(run)
    verdict(10, "serialization", [
        ("roundtrip forecasts bitwise identical", bitwise),
        (f"exit codes valid/corrupt/version-999 = {codes} (want [0, 7, 7])", codes == [0, 7, 7]),
        (f"{elapsed:.2f}s < 1s", elapsed < 1),
    ])
