"""Classification metrics, crisis-onset analysis and k-fold cross-validation."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .neural import PROB_CLIP


class UndefinedMetricError(ValueError):
    def __init__(self, metric, reason):
        super().__init__(f"{metric} is undefined: {reason}")
        self.metric = metric


def _binary(x, name):
    a = np.asarray(x)
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must be binary")
    return a.astype(np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


def confusion(labels, signals) -> ConfusionMatrix:
    y = _binary(labels, "labels")
    s = _binary(signals, "signals")
    if y.shape != s.shape:
        raise ValueError(f"length mismatch: {len(y)} labels vs {len(s)} signals")
    return ConfusionMatrix(
        tp=int(np.sum((y == 1) & (s == 1))),
        fn=int(np.sum((y == 1) & (s == 0))),
        fp=int(np.sum((y == 0) & (s == 1))),
        tn=int(np.sum((y == 0) & (s == 0))),
    )


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("accuracy", "no evaluated days")
    return (cm.tp + cm.tn) / cm.total


def tpr_fpr(cm: ConfusionMatrix) -> tuple[float, float]:
    if cm.tp + cm.fn == 0:
        raise UndefinedMetricError("tpr", "no actual crisis days")
    if cm.fp + cm.tn == 0:
        raise UndefinedMetricError("fpr", "no actual tranquil days")
    return cm.tp / (cm.tp + cm.fn), cm.fp / (cm.fp + cm.tn)


def crisis_recall(cm: ConfusionMatrix) -> float:
    """Share of crisis days that were signalled (the "% of correct predictions" row)."""
    if cm.tp + cm.fn == 0:
        raise UndefinedMetricError("crisis_recall", "no actual crisis days")
    return cm.tp / (cm.tp + cm.fn)


def bce_loss(labels, probs) -> float:
    y = np.asarray(labels, dtype=float)
    p = np.clip(np.asarray(probs, dtype=float), PROB_CLIP, 1 - PROB_CLIP)
    if y.shape != p.shape:
        raise ValueError("labels and probabilities differ in length")
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def rmse(labels, probs) -> float:
    y = np.asarray(labels, dtype=float)
    p = np.asarray(probs, dtype=float)
    return float(np.sqrt(np.mean((p - y) ** 2)))


def roc_auc(labels, scores):
    """ROC staircase over the unique scores, and trapezoidal AUC.

    Returns ``(points, auc)`` with ``points`` an (k, 2) array of (fpr, tpr)
    running from (0, 0) to (1, 1). Tied scores share one threshold.
    """
    y = _binary(labels, "labels")
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    P = int(y.sum())
    N = len(y) - P
    if P == 0 or N == 0:
        raise UndefinedMetricError("auc", "labels contain a single class")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(1 - y_sorted)
    # keep only the last index of each run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tpr = np.r_[0.0, tps[last] / P]
    fpr = np.r_[0.0, fps[last] / N]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return np.column_stack([fpr, tpr]), auc


def sar(acc: float, auc: float, rmse_value: float) -> float:
    return (acc + auc + (1.0 - rmse_value)) / 3.0


@dataclass
class MetricsReport:
    accuracy: float
    bce_loss: float
    tpr: float
    fpr: float
    auc: float
    rmse: float
    sar: float
    crisis_recall: float
    n: int
    roc_points: np.ndarray = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("roc_points")
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def roc_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr"])
            for f, t in self.roc_points:
                w.writerow([repr(float(f)), repr(float(t))])


def metrics_report(labels, probs, signals=None, cutoff=0.5) -> MetricsReport:
    """All scores for one set of predictions. Signals default to ``probs >= cutoff``."""
    y = _binary(labels, "labels")
    p = np.asarray(probs, dtype=float)
    s = (p >= np.asarray(cutoff)).astype(np.int64) if signals is None else _binary(signals, "signals")
    cm = confusion(y, s)
    acc = accuracy(cm)
    try:
        tpr, fpr = tpr_fpr(cm)
    except UndefinedMetricError:
        tpr = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else float("nan")
        fpr = cm.fp / (cm.fp + cm.tn) if cm.fp + cm.tn else float("nan")
    try:
        points, auc = roc_auc(y, p)
    except UndefinedMetricError:
        points, auc = np.array([[0.0, 0.0], [1.0, 1.0]]), float("nan")
    r = rmse(y, p)
    return MetricsReport(
        accuracy=acc, bce_loss=bce_loss(y, p), tpr=tpr, fpr=fpr, auc=auc, rmse=r,
        sar=sar(acc, auc, r), crisis_recall=tpr, n=cm.total, roc_points=points,
    )


def sar_curve(labels, probs, cutoffs) -> np.ndarray:
    """SAR at each constant cutoff; the AUC and RMSE terms do not depend on it."""
    y = _binary(labels, "labels")
    p = np.asarray(probs, dtype=float)
    _, auc = roc_auc(y, p)
    r = rmse(y, p)
    return np.array([sar(accuracy(confusion(y, (p >= c).astype(int))), auc, r) for c in cutoffs])


# -- onsets -------------------------------------------------------------------

@dataclass
class OnsetReport:
    total_crisis_days: int
    correct_predictions: int
    pct_correct: float
    total_onsets: int
    predicted_onsets: int
    pct_onsets: float
    false_onset_alarms_pct: float
    avg_days_ahead: float

    def as_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def rising_edges(x) -> np.ndarray:
    x = np.asarray(x).astype(bool)
    prev = np.r_[False, x[:-1]]
    return np.flatnonzero(x & ~prev)


def onset_analysis(labels, signals, horizon: int = 5) -> OnsetReport:
    """Crisis onsets and how far ahead the signals announced them.

    An onset at i counts as predicted when some signal falls in
    [i - horizon, i]. Its lead is i minus the earliest such signal on a
    non-crisis day (0 if only day i itself is signalled). A signal onset on a
    tranquil day with no true onset in the following ``horizon`` days is a
    false alarm, reported as a share of all signal onsets.
    """
    y = _binary(labels, "labels")
    s = _binary(signals, "signals")
    if y.shape != s.shape:
        raise ValueError("labels and signals differ in length")
    onsets = rising_edges(y)
    leads = []
    for i in onsets:
        lo = max(0, i - horizon)
        if not s[lo : i + 1].any():
            continue
        early = [j for j in range(lo, i) if s[j] and not y[j]]
        leads.append(i - early[0] if early else 0)
    sig_onsets = rising_edges(s)
    false = 0
    for j in sig_onsets:
        if y[j]:
            continue
        if not np.any((onsets >= j) & (onsets <= j + horizon)):
            false += 1
    crisis_days = int(y.sum())
    correct = int(np.sum((y == 1) & (s == 1)))
    return OnsetReport(
        total_crisis_days=crisis_days,
        correct_predictions=correct,
        pct_correct=100.0 * correct / crisis_days if crisis_days else float("nan"),
        total_onsets=int(len(onsets)),
        predicted_onsets=len(leads),
        pct_onsets=100.0 * len(leads) / len(onsets) if len(onsets) else float("nan"),
        false_onset_alarms_pct=100.0 * false / len(sig_onsets) if len(sig_onsets) else 0.0,
        avg_days_ahead=float(np.mean(leads)) if leads else float("nan"),
    )


# -- cross-validation -------------------------------------------------------------

def kfold_indices(n: int, k: int) -> list[np.ndarray]:
    """Contiguous folds over range(n); sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"cannot split {n} items into {k} non-empty folds")
    return [np.asarray(f) for f in np.array_split(np.arange(n), k)]


@dataclass
class CrossValidationResult:
    k: int
    fold_accuracy: list[float]
    fold_bce: list[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))

    @property
    def mean_bce(self) -> float:
        return float(np.mean(self.fold_bce))


def kfold_cv(panel, cfg, k: int, labeled=None) -> CrossValidationResult:
    """k contiguous folds over the windows of the test range.

    Each fold is scored by a predictor trained on every other window of the
    panel (training range plus the remaining test folds). ``labeled`` is a
    :class:`~stockews.pipeline.LabeledPanel`; it is computed by a single
    full-sample SWARCH fit when omitted.
    """
    from .pipeline import label_panel, predictor_dataset

    if labeled is None:
        labeled = label_panel(panel, cfg)
    X, y, _ = predictor_dataset(panel, labeled, cfg)
    l = cfg.train.window
    n_rows = len(panel)
    test_start = int(round(n_rows * cfg.split))
    # windows whose first row is in the test range
    first_test = test_start
    n_test = len(y) - first_test
    if n_test < 1:
        raise ValueError("test range holds no complete window")
    folds = kfold_indices(n_test, k)
    accs, losses = [], []
    for fi, fold in enumerate(folds):
        idx = fold + first_test
        mask = np.ones(len(y), dtype=bool)
        mask[idx] = False
        fold_cfg = _replace_seed(cfg.train, cfg.train.seed + 1000 * (fi + 1))
        net = _train(cfg.predictor, X[mask], y[mask], fold_cfg, X.shape[2])
        p = net.predict(X[idx])
        cut = labeled.cutoff
        accs.append(accuracy(confusion(y[idx].astype(int), (p >= cut).astype(int))))
        losses.append(bce_loss(y[idx], p))
    return CrossValidationResult(k, accs, losses)


def single_split_eval(panel, cfg, labeled=None) -> tuple[float, float]:
    """Accuracy and BCE of one predictor trained on the training range only."""
    from .pipeline import label_panel, predictor_dataset

    if labeled is None:
        labeled = label_panel(panel, cfg)
    X, y, _ = predictor_dataset(panel, labeled, cfg)
    test_start = int(round(len(panel) * cfg.split))
    train_idx = np.arange(0, max(test_start - cfg.train.window, 1))
    test_idx = np.arange(test_start, len(y))
    net = _train(cfg.predictor, X[train_idx], y[train_idx], cfg.train, X.shape[2])
    p = net.predict(X[test_idx])
    acc = accuracy(confusion(y[test_idx].astype(int), (p >= labeled.cutoff).astype(int)))
    return acc, bce_loss(y[test_idx], p)


def _replace_seed(train_cfg, seed):
    from dataclasses import replace

    return replace(train_cfg, seed=seed)


def _train(kind, X, y, train_cfg, input_dim):
    from .neural import build_network, fit_network

    net = build_network(kind, input_dim, train_cfg)
    return fit_network(net, X, y, train_cfg)
