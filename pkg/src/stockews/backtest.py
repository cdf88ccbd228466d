"""Signal-gated hold/exit strategy against buy-and-hold."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class BacktestResult:
    expected_return: float
    stdev: float
    sharpe: float
    n_days: int
    n_exits: int

    @property
    def sharpe_defined(self) -> bool:
        return not np.isnan(self.sharpe)

    def as_dict(self):
        return asdict(self)


def positions_from_signals(signals) -> np.ndarray:
    """Position held over day t is 1 - signal_{t-1}; the first day is held."""
    s = np.asarray(signals, dtype=np.int64)
    return np.r_[1, 1 - s[:-1]] if len(s) else s


def summarize_returns(returns, rf: float = 0.0, n_exits: int = 0) -> BacktestResult:
    r = np.asarray(returns, dtype=float)
    mean = float(r.mean())
    sd = float(r.std(ddof=1)) if len(r) > 1 else 0.0
    sharpe = (mean - rf) / sd if sd > 0 else float("nan")
    return BacktestResult(mean, sd, sharpe, len(r), n_exits)


def strategy_returns(market_returns, positions, cost: float = 0.0) -> np.ndarray:
    """Position-masked market returns, less ``cost`` (in return units) per position change."""
    m = np.asarray(market_returns, dtype=float)
    pos = np.asarray(positions, dtype=float)
    if m.shape != pos.shape:
        raise ValueError("market returns and positions are misaligned")
    out = pos * m
    if cost:
        out = out - cost * np.abs(np.diff(np.r_[1.0, pos]))
    return out


def run_backtest(prices, signals, rf: float = 0.0, cost: float = 0.0) -> BacktestResult:
    """Backtest over daily percent log returns.

    ``signals[t]`` is the warning issued at the close of day t and must be
    aligned with ``prices``; it governs the position over day t+1's return.
    """
    close = np.asarray(getattr(prices, "close", prices), dtype=float)
    s = np.asarray(signals)
    if len(s) != len(close):
        raise ValueError(f"{len(s)} signals for {len(close)} prices")
    if s.size and not np.all((s == 0) | (s == 1)):
        raise ValueError("signals must be binary")
    market = 100.0 * np.diff(np.log(close))
    pos = 1 - s[:-1].astype(np.int64)
    exits = int(np.sum(np.diff(np.r_[1, pos]) == -1))
    return summarize_returns(strategy_returns(market, pos, cost), rf, exits)


def buy_and_hold(prices, rf: float = 0.0) -> BacktestResult:
    close = np.asarray(getattr(prices, "close", prices), dtype=float)
    return summarize_returns(100.0 * np.diff(np.log(close)), rf)


def format_backtest_table(rows) -> str:
    """CSV with one line per strategy: model, E[R_p], sigma_p, SharpeRatio."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "expected_return", "stdev", "sharpe"])
    for name, res in rows.items():
        w.writerow([name, f"{res.expected_return:.3f}", f"{res.stdev:.3f}",
                    "" if np.isnan(res.sharpe) else f"{res.sharpe:.3f}"])
    return buf.getvalue()
