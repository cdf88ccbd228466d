"""Daily recursive early-warning loop.

At every step t the loop sees only the panel rows dated <= t. It refits the
SWARCH model (every ``refit_stride`` days, warm-started), filters the
high-volatility probabilities, picks the two-peak cutoff, relabels the
history, (re)trains the predictor when due and emits the warning for t+1.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import FeaturePanel, Standardizer
from .neural import TrainConfig, build_network, fit_network, make_windows
from .regime import (
    EstimationError,
    NumericError,
    SwarchParams,
    default_start,
    estimate_swarch,
    hamilton_filter,
)
from .threshold import two_peak_cutoff

logger = logging.getLogger(__name__)

RESERVED_COLUMNS = ("true_state",)


def derive_seed(seed: int, tag: str) -> int:
    return (int(seed) * 1_000_003 + zlib.crc32(tag.encode())) % (2**32)


@dataclass
class EwsConfig:
    window: int = 5
    refit_stride: int = 1
    retrain: str = "stride"          # "stride" or "once"
    retrain_stride: int | None = None  # defaults to refit_stride
    predictor: str = "lstm"
    split: float = 0.7
    train: TrainConfig = field(default_factory=TrainConfig)
    bins: int = 50
    smooth_window: int = 3
    starts: int = 5
    warmup: int = 100
    seed: int = 0
    return_column: str = "log_return"
    features: list[str] | None = None

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.window < 1 or self.refit_stride < 1:
            raise ValueError("window and refit_stride must be >= 1")
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")
        if self.retrain not in ("stride", "once"):
            raise ValueError("retrain must be 'stride' or 'once'")
        if self.predictor not in ("lstm", "bpnn"):
            raise ValueError("predictor must be 'lstm' or 'bpnn'")
        self.train = replace(self.train, window=self.window, seed=derive_seed(self.seed, "predictor"))

    @property
    def effective_retrain_stride(self) -> int:
        return self.retrain_stride or self.refit_stride

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"].pop("window")
        d["train"].pop("seed")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EwsConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "train" in d:
            tr = dict(d["train"])
            tr.pop("window", None)
            tr.pop("seed", None)
            d["train"] = TrainConfig(**tr)
        return cls(**d)


@dataclass
class WarningRecord:
    date: np.datetime64       # the warned day t+1
    as_of: np.datetime64      # day t, the last datum used
    prob_high: float
    cutoff: float
    y_hat: float
    signal: int
    true_label: int | None = None
    suppressed: bool = False
    in_test: bool = False
    refit_failed: bool = False


RECORD_FIELDS = [f.name for f in fields(WarningRecord)]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, n)) for n in RECORD_FIELDS])


def read_records(path) -> list[WarningRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            f = lambda k: float(row[k]) if row[k] != "" else float("nan")
            out.append(WarningRecord(
                date=np.datetime64(row["date"], "D"),
                as_of=np.datetime64(row["as_of"], "D"),
                prob_high=f("prob_high"),
                cutoff=f("cutoff"),
                y_hat=f("y_hat"),
                signal=int(row["signal"]),
                true_label=int(row["true_label"]) if row["true_label"] != "" else None,
                suppressed=row["suppressed"] == "1",
                in_test=row["in_test"] == "1",
                refit_failed=row["refit_failed"] == "1",
            ))
    return out


def feature_names(panel: FeaturePanel, cfg: EwsConfig) -> list[str]:
    if cfg.features is not None:
        return list(cfg.features)
    return [n for n in panel.names if n not in RESERVED_COLUMNS]


def split_train_test(panel: FeaturePanel, fraction: float, window: int = 1):
    """Chronological split; the training part gets round(n * fraction) rows."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n_train = int(round(len(panel) * fraction))
    if len(panel) - n_train < window + 1:
        raise ValueError(f"test part has {len(panel) - n_train} rows, needs at least {window + 1}")
    return panel.slice(0, n_train), panel.slice(n_train, None)


# -- batch labelling ------------------------------------------------------------

@dataclass
class LabeledPanel:
    prob_high: np.ndarray
    cutoff: float
    labels: np.ndarray
    params: SwarchParams
    fallback: bool = False


def label_panel(panel: FeaturePanel, cfg: EwsConfig, params: SwarchParams | None = None) -> LabeledPanel:
    """One full-sample fit (unless ``params`` is given), one cutoff, one set of labels."""
    y = panel[cfg.return_column]
    if params is None:
        params, _ = estimate_swarch(y, starts=cfg.starts, seed=derive_seed(cfg.seed, "swarch"))
    prob = hamilton_filter(params, y).prob_high
    cutoff, info = two_peak_cutoff(prob, cfg.bins, cfg.smooth_window, return_details=True)
    return LabeledPanel(prob, cutoff, (prob >= cutoff).astype(np.int64), params, info["fallback"])


def predictor_inputs(raw: np.ndarray, std: Standardizer, prob: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Standardized explanatory columns followed by the filtering probability and crisis label."""
    return np.column_stack([std.transform(raw), prob, labels])


def predictor_dataset(panel: FeaturePanel, labeled: LabeledPanel, cfg: EwsConfig):
    """All windows of the panel with next-day targets; statistics from the training range."""
    raw = panel.matrix(feature_names(panel, cfg))
    n_train = max(int(round(len(panel) * cfg.split)), 2)
    std = Standardizer.fit(raw[:n_train])
    F = predictor_inputs(raw, std, labeled.prob_high, labeled.labels)
    X, y = make_windows(F, labeled.labels, cfg.window)
    return X, y, std


# -- recursive loop -------------------------------------------------------------

def _digest(view: FeaturePanel) -> str:
    h = hashlib.sha256()
    h.update(view.dates.astype("int64").tobytes())
    for name in view.names:
        h.update(name.encode())
        h.update(np.ascontiguousarray(view[name]).tobytes())
    return h.hexdigest()


@dataclass
class StepAudit:
    t: int
    n_rows: int
    last_date: np.datetime64
    digest: str


@dataclass
class EwsRun:
    records: list[WarningRecord]
    audit: list[StepAudit] = field(default_factory=list)
    params_history: list[tuple[int, SwarchParams]] = field(default_factory=list)

    @property
    def cutoffs(self) -> np.ndarray:
        return np.array([r.cutoff for r in self.records if not r.suppressed])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


class _State:
    def __init__(self):
        self.params = None
        self.first_fit_t = None
        self.net = None
        self.std = None
        self.first_train_t = None


def _refit(y, state, cfg, t):
    if state.params is None:
        fit = estimate_swarch(y, starts=cfg.starts, seed=derive_seed(cfg.seed, "swarch"))
    else:
        fit = estimate_swarch(y, starts=2, seed=derive_seed(cfg.seed, f"swarch-{t}"),
                              init=[state.params, default_start(y)])
    return fit.params


def _step(view: FeaturePanel, state: _State, cfg: EwsConfig, feats: list[str], t: int, predict: bool,
          test_start: int):
    """Everything computable at day t from ``view`` (rows 0..t)."""
    y = view[cfg.return_column]
    failed = False
    due = state.params is None or (t - state.first_fit_t) % cfg.refit_stride == 0
    if due:
        try:
            params = _refit(y, state, cfg, t)
            if state.params is None:
                state.first_fit_t = t
            state.params = params
        except (EstimationError, NumericError) as exc:
            if state.params is None:
                raise
            logger.warning("SWARCH refit failed at t=%d (%s); reusing previous parameters", t, exc)
            failed = True
    try:
        prob = hamilton_filter(state.params, y).prob_high
    except NumericError:
        logger.warning("filter failed at t=%d; refitting from scratch", t)
        state.params = _refit(y, _State(), cfg, t)
        prob = hamilton_filter(state.params, y).prob_high
        failed = True
    cutoff = two_peak_cutoff(prob, cfg.bins, cfg.smooth_window)
    labels = (prob >= cutoff).astype(np.int64)
    out = {"prob": float(prob[-1]), "cutoff": cutoff, "label": int(labels[-1]), "failed": failed,
           "y_hat": float("nan"), "ready": False}
    if not predict:
        return out

    raw = view.matrix(feats)
    if cfg.retrain == "once":
        train_due = state.net is None and len(view) >= test_start
    else:
        train_due = state.net is None or (t - state.first_train_t) % cfg.effective_retrain_stride == 0
    if train_due and len(view) > cfg.window:
        std = Standardizer.fit(raw)
        F = predictor_inputs(raw, std, prob, labels)
        X, target = make_windows(F, labels, cfg.window)
        net = build_network(cfg.predictor, F.shape[1], cfg.train)
        state.net = fit_network(net, X, target, cfg.train)
        state.std = std
        if state.first_train_t is None:
            state.first_train_t = t
    if state.net is None:
        return out
    F_last = predictor_inputs(raw[-cfg.window:], state.std, prob[-cfg.window:], labels[-cfg.window:])
    out["y_hat"] = float(state.net.predict(F_last[None])[0])
    out["ready"] = True
    return out


def run_ews(panel: FeaturePanel, cfg: EwsConfig | None = None, audit: bool = False) -> EwsRun:
    """Walk forward through the panel and emit one record per predicted day.

    Windows end at t = l-1 .. T-2 and warn for t+1, so a panel of T rows
    yields exactly T - l records. Steps with fewer than ``cfg.warmup`` rows,
    or before the predictor has been trained, are emitted as suppressed.
    """
    cfg = cfg or EwsConfig()
    T = len(panel)
    l = cfg.window
    if T <= l:
        raise ValueError(f"panel has {T} rows, need more than the window length {l}")
    feats = feature_names(panel, cfg)
    test_start = int(round(T * cfg.split))
    state = _State()
    run = EwsRun(records=[])
    pending: WarningRecord | None = None

    for t in range(l - 1, T):
        view = panel.slice(0, t + 1)
        if audit:
            run.audit.append(StepAudit(t, len(view), view.dates[-1], _digest(view)))
        predict = t <= T - 2
        if t + 1 < cfg.warmup:
            if predict:
                run.records.append(WarningRecord(
                    date=panel.dates[t + 1], as_of=panel.dates[t], prob_high=float("nan"),
                    cutoff=float("nan"), y_hat=float("nan"), signal=0, suppressed=True,
                    in_test=t + 1 >= test_start,
                ))
            continue
        step = _step(view, state, cfg, feats, t, predict, test_start)
        if step["failed"]:
            run.params_history.append((t, None))
        elif state.first_fit_t is not None and (t - state.first_fit_t) % cfg.refit_stride == 0:
            run.params_history.append((t, state.params))
        if pending is not None:
            pending.true_label = step["label"]
            run.records.append(pending)
            pending = None
        if not predict:
            break
        ready = step["ready"]
        rec = WarningRecord(
            date=panel.dates[t + 1], as_of=panel.dates[t], prob_high=step["prob"],
            cutoff=step["cutoff"], y_hat=step["y_hat"],
            signal=int(ready and step["y_hat"] >= step["cutoff"]),
            suppressed=not ready, in_test=t + 1 >= test_start, refit_failed=step["failed"],
        )
        pending = rec
    if pending is not None:
        run.records.append(pending)
    return run


def replay_signals(records, cutoff: float) -> np.ndarray:
    """Signals from the recorded predictions at a constant cutoff."""
    y_hat = np.array([r.y_hat for r in records])
    return np.where(np.isnan(y_hat), 0, y_hat >= cutoff).astype(np.int64)
