"""Synthetic market panels with known volatility regimes."""

from __future__ import annotations

import numpy as np

from .data import FeaturePanel, PriceSeries, build_features
from .regime import SwarchParams, simulate_swarch

# calm/turbulent persistence with a wide variance gap
SEPARATED = SwarchParams(u=0.03, theta1=0.05, alpha0=0.5, alpha1=0.2, gamma2=16.0, p11=0.98, p22=0.95)

DAILY_EXOGENOUS = ("foreign_index", "exchange_rate", "gold", "oil")
MONTHLY_EXOGENOUS = ("interest_rate", "m1", "m2", "cpi")


def business_days(start: str, n: int) -> np.ndarray:
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def synthetic_panel(params: SwarchParams = SEPARATED, length: int = 2000, seed: int = 0,
                    start: str = "2010-01-04", exogenous: bool = True) -> FeaturePanel:
    """Simulated SWARCH returns turned into prices, endogenous features and
    (optionally) random-walk daily and step monthly exogenous columns.

    The panel has ``length`` rows and carries the simulated regime in a
    ``true_state`` column (1 calm, 2 turbulent).
    """
    n_prices = length + 2
    path = simulate_swarch(params, n_prices - 1, seed=seed)
    dates = business_days(start, n_prices)
    close = 100.0 * np.exp(np.r_[0.0, np.cumsum(path.returns) / 100.0])
    prices = PriceSeries(dates, close)

    rng = np.random.default_rng([seed, 1])
    daily = {}
    monthly = {}
    if exogenous:
        for i, name in enumerate(DAILY_EXOGENOUS):
            daily[name] = 100.0 * np.exp(np.cumsum(0.01 * rng.standard_normal(n_prices)))
        months = np.arange(dates[0].astype("datetime64[M]"), dates[-1].astype("datetime64[M]") + 1)
        month_dates = months.astype("datetime64[D]")
        for name in MONTHLY_EXOGENOUS:
            monthly[name] = (month_dates, 100.0 + np.cumsum(rng.standard_normal(len(months))))
    panel = build_features(prices, daily, monthly)
    # returns[k] is dated prices[k+1]; the panel starts at returns[1]
    states = path.true_states[1:].astype(float)
    return panel.with_column("true_state", states[-len(panel):])
