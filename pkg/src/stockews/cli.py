"""Command-line front end.

Exit codes: 0 success, 1 input/output problem, 2 usage error, 3 numerical failure.
Data go to files; logs go to standard error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import buy_and_hold, format_backtest_table, run_backtest
from .data import DataError, FeaturePanel
from .evaluation import metrics_report, onset_analysis
from .neural import DivergenceError, LstmNetwork, TrainConfig, build_network, fit_network, make_windows
from .pipeline import (
    EwsConfig,
    LabeledPanel,
    WarningRecord,
    derive_seed,
    feature_names,
    label_panel,
    predictor_dataset,
    read_records,
    run_ews,
    write_records,
)
from .regime import EstimationError, NumericError, SwarchParams, estimate_swarch, hamilton_filter
from .synthetic import synthetic_panel
from .threshold import CrisisSeries, smoothed_histogram, two_peak_cutoff

logger = logging.getLogger("stockews")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out, command, config, inputs, seed, artifacts, started):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "artifacts": [str(a) for a in artifacts],
        "timings": {"elapsed_s": round(time.perf_counter() - started, 3)},
    }
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> EwsConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            d = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config}: {exc}") from None
    overrides = {
        "window": "window", "refit_stride": "refit_stride", "retrain_stride": "retrain_stride",
        "retrain": "retrain", "predictor": "predictor", "split": "split", "bins": "bins",
        "smooth_window": "smooth_window", "starts": "starts", "warmup": "warmup", "seed": "seed",
    }
    for attr, key in overrides.items():
        v = getattr(args, attr, None)
        if v is not None:
            d[key] = v
    train = dict(d.get("train", {}))
    for attr in ("epochs", "batch_size", "learning_rate", "hidden"):
        v = getattr(args, attr, None)
        if v is not None:
            train[attr] = v
    if train:
        d["train"] = train
    try:
        return EwsConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _add_config_flags(p, pipeline=True):
    p.add_argument("--config", help="JSON file with pipeline settings (flags override it)")
    p.add_argument("--seed", type=int, help="top-level random seed")
    p.add_argument("--window", type=int, help="window length l (days)")
    p.add_argument("--predictor", choices=["lstm", "bpnn"], help="predictor network")
    p.add_argument("--split", type=float, help="training fraction of the chronological split")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="mini-batch size")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, help="gradient-descent step size")
    p.add_argument("--hidden", type=int, help="hidden units")
    p.add_argument("--bins", type=int, help="histogram bins for the two-peak cutoff")
    p.add_argument("--smooth-window", dest="smooth_window", type=int, help="moving-average width over bins")
    p.add_argument("--starts", type=int, help="optimizer starts for the first SWARCH fit")
    if pipeline:
        p.add_argument("--refit-stride", dest="refit_stride", type=int, help="days between SWARCH refits")
        p.add_argument("--retrain", choices=["stride", "once"], help="predictor retraining mode")
        p.add_argument("--retrain-stride", dest="retrain_stride", type=int,
                       help="days between predictor retrainings (default: refit stride)")
        p.add_argument("--warmup", type=int, help="minimum observations before the first fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stockews", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="per-step diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic SWARCH panel")
    p.add_argument("--t", type=int, default=2000, help="number of panel rows")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output panel CSV")
    p.add_argument("--gamma2", type=float, default=16.0, help="turbulent variance scale")
    p.add_argument("--p11", type=float, default=0.98, help="calm-regime persistence")
    p.add_argument("--p22", type=float, default=0.95, help="turbulent-regime persistence")
    p.add_argument("--alpha0", type=float, default=0.5, help="ARCH constant")
    p.add_argument("--alpha1", type=float, default=0.2, help="ARCH coefficient")
    p.add_argument("--theta1", type=float, default=0.05, help="AR(1) coefficient")
    p.add_argument("--u", type=float, default=0.03, help="mean return (percent)")
    p.add_argument("--start-date", default="2010-01-04", help="first business day")
    p.add_argument("--no-exogenous", action="store_true", help="omit synthetic exogenous columns")

    p = sub.add_parser("fit", help="estimate SWARCH parameters on a panel")
    p.add_argument("--input", required=True, help="panel CSV")
    p.add_argument("--out", required=True, help="output parameter JSON")
    p.add_argument("--filter-out", help="optional CSV of date,prob_high")
    p.add_argument("--starts", type=int, default=5, help="optimizer starts")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--return-column", default="log_return", help="panel column with percent log returns")

    p = sub.add_parser("label", help="two-peak cutoff and crisis labels from fitted parameters")
    p.add_argument("--input", required=True, help="panel CSV")
    p.add_argument("--params", required=True, help="parameter JSON from 'fit'")
    p.add_argument("--out", required=True, help="output CSV date,label,cutoff,prob_high")
    p.add_argument("--hist-out", help="optional histogram CSV bin_center,count,smoothed")
    p.add_argument("--bins", type=int, default=50, help="histogram bins")
    p.add_argument("--smooth-window", dest="smooth_window", type=int, default=3, help="moving-average width")
    p.add_argument("--return-column", default="log_return", help="panel column with percent log returns")

    p = sub.add_parser("train", help="train a predictor on the training range of a labelled panel")
    p.add_argument("--input", required=True, help="panel CSV")
    p.add_argument("--labels", required=True, help="label CSV from 'label'")
    p.add_argument("--out", required=True, help="output network checkpoint")
    _add_config_flags(p, pipeline=False)

    p = sub.add_parser("predict", help="daily warnings: recursive pipeline, or a trained network with --net")
    p.add_argument("--input", required=True, help="panel CSV")
    p.add_argument("--out", required=True, help="output warnings CSV")
    p.add_argument("--net", help="network checkpoint from 'train' (static mode)")
    p.add_argument("--labels", help="label CSV from 'label' (static mode)")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="metrics and onset report for a warnings file")
    p.add_argument("--warnings", required=True, help="warnings CSV from 'predict'")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--roc-out", help="optional ROC CSV fpr,tpr")
    p.add_argument("--truth", choices=["label", "state"], default="label",
                   help="compare with recorded crisis labels or the panel's true_state column")
    p.add_argument("--input", help="panel CSV (needed for --truth state)")
    p.add_argument("--horizon", type=int, default=5, help="onset matching horizon (days)")
    p.add_argument("--all-days", action="store_true", help="evaluate every day, not only the test range")

    p = sub.add_parser("backtest", help="hold/exit strategy vs buy-and-hold")
    p.add_argument("--input", required=True, help="panel CSV with a close column")
    p.add_argument("--warnings", required=True, help="warnings CSV from 'predict'")
    p.add_argument("--out", required=True, help="output table CSV")
    p.add_argument("--rf", type=float, default=0.0, help="risk-free daily return (percent)")
    p.add_argument("--cost", type=float, default=0.0, help="cost per position change (percent)")
    p.add_argument("--all-days", action="store_true", help="backtest every day, not only the test range")
    p.add_argument("--name", default="EWS", help="strategy name in the table")
    return parser


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args, started):
    params = SwarchParams(args.u, args.theta1, args.alpha0, args.alpha1, args.gamma2, args.p11, args.p22)
    try:
        params.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    panel = synthetic_panel(params, args.t, seed=args.seed, start=args.start_date, exogenous=not args.no_exogenous)
    panel.to_csv(args.out)
    logger.info("wrote %d rows to %s", len(panel), args.out)
    _write_manifest(args.out, "simulate", {"params": json.loads(params.to_json()), "t": args.t}, [], args.seed,
                    [args.out], started)


def cmd_fit(args, started):
    panel = FeaturePanel.from_csv(args.input)
    fit = estimate_swarch(panel[args.return_column], starts=args.starts, seed=args.seed)
    Path(args.out).write_text(fit.params.to_json() + "\n")
    artifacts = [args.out]
    if args.filter_out:
        _write_columns(args.filter_out, panel.dates, {"prob_high": fit.filter.prob_high})
        artifacts.append(args.filter_out)
    logger.info("log-likelihood %.4f flags=%s", fit.log_likelihood, fit.flags)
    _write_manifest(args.out, "fit", {"starts": args.starts, "log_likelihood": fit.log_likelihood,
                                      "flags": fit.flags}, [args.input], args.seed, artifacts, started)


def cmd_label(args, started):
    panel = FeaturePanel.from_csv(args.input)
    params = SwarchParams.from_json(Path(args.params).read_text())
    prob = hamilton_filter(params, panel[args.return_column]).prob_high
    cutoff = two_peak_cutoff(prob, args.bins, args.smooth_window)
    labels = (prob >= cutoff).astype(np.int64)
    CrisisSeries(panel.dates, labels, np.full(len(prob), cutoff)).to_csv(args.out, prob_high=prob)
    artifacts = [args.out]
    if args.hist_out:
        smoothed_histogram(prob, args.bins, args.smooth_window).to_csv(args.hist_out)
        artifacts.append(args.hist_out)
    logger.info("cutoff %.4f, %d crisis days", cutoff, labels.sum())
    _write_manifest(args.out, "label", {"bins": args.bins, "smooth_window": args.smooth_window, "cutoff": cutoff},
                    [args.input, args.params], None, artifacts, started)


def _read_labels(path, panel):
    series = CrisisSeries.from_csv(path)
    if len(series) != len(panel) or np.any(series.dates != panel.dates):
        raise DataError(f"{path}: label dates do not match the panel")
    raw = FeaturePanel.from_csv(path)
    if "prob_high" not in raw.names:
        raise DataError(f"{path}: no prob_high column")
    return LabeledPanel(raw["prob_high"], float(series.cutoff[-1]), series.labels, params=None)


def cmd_train(args, started):
    cfg = _load_config(args)
    panel = FeaturePanel.from_csv(args.input)
    labeled = _read_labels(args.labels, panel)
    X, y, _ = predictor_dataset(panel, labeled, cfg)
    n_train = int(round(len(panel) * cfg.split))
    train_idx = np.arange(0, max(n_train - cfg.window, 1))
    net = build_network(cfg.predictor, X.shape[2], cfg.train)
    fit_network(net, X[train_idx], y[train_idx], cfg.train)
    net.save(args.out)
    logger.info("final training loss %.5f", net.loss_history[-1])
    _write_manifest(args.out, "train", cfg.to_dict(), [args.input, args.labels], cfg.seed, [args.out], started)


def _static_records(panel, labeled, net, cfg):
    X, y, _ = predictor_dataset(panel, labeled, cfg)
    y_hat = net.predict(X)
    test_start = int(round(len(panel) * cfg.split))
    l = cfg.window
    recs = []
    for j in range(len(y)):
        t = j + l - 1
        recs.append(WarningRecord(
            date=panel.dates[t + 1], as_of=panel.dates[t], prob_high=float(labeled.prob_high[t]),
            cutoff=labeled.cutoff, y_hat=float(y_hat[j]), signal=int(y_hat[j] >= labeled.cutoff),
            true_label=int(y[j]), in_test=t + 1 >= test_start,
        ))
    return recs


def cmd_predict(args, started):
    cfg = _load_config(args)
    panel = FeaturePanel.from_csv(args.input)
    inputs = [args.input]
    if args.net:
        if not args.labels:
            raise UsageError("--net requires --labels")
        labeled = _read_labels(args.labels, panel)
        net = LstmNetwork.load(args.net)
        records = _static_records(panel, labeled, net, cfg)
        inputs += [args.net, args.labels]
    else:
        records = run_ews(panel, cfg).records
    write_records(records, args.out)
    logger.info("wrote %d warning records", len(records))
    _write_manifest(args.out, "predict", cfg.to_dict(), inputs, cfg.seed, [args.out], started)


def _truth_and_rows(args, records):
    keep = [r for r in records if not r.suppressed and (args.all_days or r.in_test)]
    if not keep:
        raise DataError("no evaluable warning records")
    if args.truth == "state":
        if not args.input:
            raise UsageError("--truth state requires --input")
        panel = FeaturePanel.from_csv(args.input)
        if "true_state" not in panel.names:
            raise DataError(f"{args.input}: no true_state column")
        idx = np.searchsorted(panel.dates, [r.date for r in keep])
        truth = (panel["true_state"][idx] == 2).astype(np.int64)
    else:
        if any(r.true_label is None for r in keep):
            raise DataError("warning records lack true labels")
        truth = np.array([r.true_label for r in keep], dtype=np.int64)
    return keep, truth


def cmd_evaluate(args, started):
    records = read_records(args.warnings)
    keep, truth = _truth_and_rows(args, records)
    probs = np.array([r.y_hat for r in keep])
    signals = np.array([r.signal for r in keep])
    report = metrics_report(truth, probs, signals=signals)
    onsets = onset_analysis(truth, signals, args.horizon)
    out = {"metrics": report.as_dict(), "onsets": onsets.as_dict(), "n_records": len(keep)}
    Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True, default=_json_default) + "\n")
    artifacts = [args.out]
    if args.roc_out:
        report.roc_to_csv(args.roc_out)
        artifacts.append(args.roc_out)
    inputs = [args.warnings] + ([args.input] if args.input else [])
    _write_manifest(args.out, "evaluate", {"truth": args.truth, "horizon": args.horizon}, inputs, None,
                    artifacts, started)


def cmd_backtest(args, started):
    panel = FeaturePanel.from_csv(args.input)
    records = read_records(args.warnings)
    keep = [r for r in records if args.all_days or r.in_test]
    if not keep:
        raise DataError("no warning records to backtest")
    idx = np.searchsorted(panel.dates, [r.as_of for r in keep])
    # prices from the first decision day through the last warned day
    first, last = idx[0], idx[-1] + 1
    close = panel["close"][first : last + 1]
    signals = np.zeros(len(close), dtype=np.int64)
    signals[idx - first] = [r.signal for r in keep]
    rows = {
        "market portfolio": buy_and_hold(close, args.rf),
        args.name: run_backtest(close, signals, args.rf, args.cost),
    }
    Path(args.out).write_text(format_backtest_table(rows))
    _write_manifest(args.out, "backtest", {"rf": args.rf, "cost": args.cost}, [args.input, args.warnings], None,
                    [args.out], started)


def _write_columns(path, dates, cols):
    FeaturePanel(dates, cols).to_csv(path)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "label": cmd_label, "train": cmd_train,
    "predict": cmd_predict, "evaluate": cmd_evaluate, "backtest": cmd_backtest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        COMMANDS[args.command](args, started)
    except UsageError as exc:
        print(f"stockews {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataError, KeyError) as exc:
        print(f"stockews {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, EstimationError, DivergenceError, FloatingPointError) as exc:
        print(f"stockews {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
