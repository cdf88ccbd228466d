"""Price ingestion, log returns, realized volatility and daily feature panels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _as_dates(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]")


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray
    close: np.ndarray

    def __post_init__(self):
        dates = _as_dates(self.dates)
        close = np.asarray(self.close, dtype=float)
        if dates.shape != close.shape or dates.ndim != 1:
            raise DataError("dates and close must be 1-d and of equal length")
        if len(close) < 2:
            raise DataError("a price series needs at least 2 observations")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise DataError("price dates must be strictly increasing")
        if not np.all(close > 0):
            raise DataError("close prices must be positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "close", close)

    def __len__(self):
        return len(self.close)


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns in percent, dated by the later of the two prices."""

    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.dates.shape != self.values.shape:
            raise DataError("dates and values must have equal length")

    def __len__(self):
        return len(self.values)


@dataclass
class FeaturePanel:
    """Columns of daily features sharing one date axis."""

    dates: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.dates = _as_dates(self.dates)
        cols = {}
        for name, values in self.columns.items():
            values = np.asarray(values, dtype=float)
            if values.shape != self.dates.shape:
                raise DataError(f"column {name!r} has length {len(values)}, expected {len(self.dates)}")
            cols[name] = values
        self.columns = cols

    def __len__(self):
        return len(self.dates)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.names if names is None else list(names)
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.columns[n] for n in names])

    def slice(self, start: int | None = None, stop: int | None = None) -> "FeaturePanel":
        sl = slice(start, stop)
        return FeaturePanel(self.dates[sl].copy(), {k: v[sl].copy() for k, v in self.columns.items()})

    def with_column(self, name: str, values) -> "FeaturePanel":
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=float)
        return FeaturePanel(self.dates.copy(), cols)

    def prices(self, column: str = "close") -> PriceSeries:
        return PriceSeries(self.dates, self.columns[column])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", *self.names])
            for i, d in enumerate(self.dates):
                writer.writerow([str(d), *(repr(float(self.columns[n][i])) for n in self.names)])

    @classmethod
    def from_csv(cls, path, date_column: str = "date") -> "FeaturePanel":
        dates, cols = _read_table(path, date_column)
        order = np.argsort(dates, kind="stable")
        return cls(dates[order], {k: v[order] for k, v in cols.items()})

    @staticmethod
    def concat(parts: Sequence["FeaturePanel"]) -> "FeaturePanel":
        names = parts[0].names
        for p in parts[1:]:
            if p.names != names:
                raise DataError("cannot concatenate panels with different columns")
        dates = np.concatenate([p.dates for p in parts])
        return FeaturePanel(dates, {n: np.concatenate([p[n] for p in parts]) for n in names})


def _read_table(path, date_column: str) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if date_column not in header:
            raise DataError(f"{path}: no date column {date_column!r} in header")
        di = header.index(date_column)
        others = [h for i, h in enumerate(header) if i != di]
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                dates.append(np.datetime64(row[di].strip(), "D"))
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable date {row[di]!r}") from None
            vals = []
            for i, cell in enumerate(row):
                if i == di:
                    continue
                cell = cell.strip()
                try:
                    vals.append(float(cell) if cell else np.nan)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-numeric value {cell!r} in column {header[i]!r}") from None
            rows.append(vals)
    dates = np.array(dates, dtype="datetime64[D]")
    values = np.array(rows, dtype=float).reshape(len(rows), len(others))
    uniq, counts = np.unique(dates, return_counts=True)
    if np.any(counts > 1):
        raise DataError(f"{path}: duplicate date {uniq[counts > 1][0]}")
    return dates, {name: values[:, j] for j, name in enumerate(others)}


def load_price_panel(path, schema: Mapping[str, str] | None = None):
    """Read a comma-separated price file.

    ``schema`` maps the roles ``date`` and ``close`` to column names in the
    file header. Every other column is returned, sorted by date, in the raw
    feature dict.
    """
    schema = dict(schema or {})
    date_col = schema.get("date", "date")
    close_col = schema.get("close", "close")
    dates, cols = _read_table(path, date_col)
    if close_col not in cols:
        raise DataError(f"{path}: no price column {close_col!r}")
    order = np.argsort(dates, kind="stable")
    dates = dates[order]
    cols = {k: v[order] for k, v in cols.items()}
    close = cols.pop(close_col)
    bad = np.flatnonzero(~(close > 0))
    if bad.size:
        raise DataError(f"{path}: non-positive price {close[bad[0]]} on {dates[bad[0]]}")
    return PriceSeries(dates, close), cols


def log_returns(prices: PriceSeries) -> ReturnSeries:
    if len(prices) < 2:
        raise DataError("log returns need at least 2 prices")
    values = 100.0 * np.diff(np.log(prices.close))
    return ReturnSeries(prices.dates[1:], values)


def realized_volatility(returns, t: int) -> float:
    # root mean squared deviation from the running mean over returns[0..t]
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    if t < 1:
        raise DataError("realized volatility needs at least two returns (t >= 1)")
    if t >= len(r):
        raise IndexError(f"t={t} out of range for {len(r)} returns")
    window = r[: t + 1]
    return float(np.sqrt(np.mean((window - window.mean()) ** 2)))


def realized_volatility_series(returns) -> np.ndarray:
    """Expanding-window realized volatility; NaN at index 0."""
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    n = np.arange(1, len(r) + 1)
    mean = np.cumsum(r) / n
    var = np.cumsum(r * r) / n - mean**2
    out = np.sqrt(np.maximum(var, 0.0))
    if len(out):
        out[0] = np.nan
    return out


def align_panel(
    dates,
    daily: Mapping[str, np.ndarray],
    monthly: Mapping[str, tuple] | None = None,
) -> FeaturePanel:
    """Put daily and monthly columns on the daily date axis.

    Monthly columns are ``(obs_dates, values)`` pairs and are forward-filled
    to every trading day. Interior gaps in daily columns are forward-filled;
    leading rows that still contain a gap are dropped.
    """
    dates = _as_dates(dates)
    cols: dict[str, np.ndarray] = {}
    for name, values in daily.items():
        values = np.asarray(values, dtype=float)
        if values.shape != dates.shape:
            raise DataError(f"daily column {name!r} does not match the date axis")
        cols[name] = _ffill(values)
    for name, (mdates, mvalues) in (monthly or {}).items():
        mdates = _as_dates(mdates)
        mvalues = np.asarray(mvalues, dtype=float)
        order = np.argsort(mdates, kind="stable")
        mdates, mvalues = mdates[order], mvalues[order]
        if len(mdates) == 0 or dates[0] < mdates[0]:
            raise DataError(f"daily dates start before the first observation of monthly column {name!r}")
        idx = np.searchsorted(mdates, dates, side="right") - 1
        cols[name] = _ffill(mvalues)[idx]
    if not cols:
        return FeaturePanel(dates, {})
    gaps = np.zeros(len(dates), dtype=bool)
    for v in cols.values():
        gaps |= np.isnan(v)
    start = int(np.argmin(gaps)) if not gaps.all() else len(dates)
    return FeaturePanel(dates[start:], {k: v[start:] for k, v in cols.items()})


def _ffill(values: np.ndarray) -> np.ndarray:
    mask = np.isnan(values)
    if not mask.any():
        return values.copy()
    idx = np.where(~mask, np.arange(len(values)), 0)
    np.maximum.accumulate(idx, out=idx)
    out = values[idx]
    # anything before the first observation stays NaN
    first = np.argmax(~mask) if (~mask).any() else len(values)
    out[:first] = np.nan
    return out


def build_features(prices: PriceSeries, daily=None, monthly=None) -> FeaturePanel:
    """Endogenous features (close, log return, realized volatility) plus exogenous columns.

    ``daily`` columns must be dated like ``prices``. The first return has no
    realized volatility, so the panel starts two prices in.
    """
    rets = log_returns(prices)
    rv = realized_volatility_series(rets)
    cols = {
        "close": prices.close[1:],
        "log_return": rets.values,
        "realized_vol": rv,
    }
    for name, values in (daily or {}).items():
        values = np.asarray(values, dtype=float)
        if len(values) != len(prices):
            raise DataError(f"daily column {name!r} does not match the price dates")
        cols[name] = values[1:]
    return align_panel(rets.dates, cols, monthly)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale
