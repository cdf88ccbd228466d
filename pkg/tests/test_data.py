import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from stockews.data import (
    DataError,
    FeaturePanel,
    PriceSeries,
    align_panel,
    build_features,
    load_price_panel,
    log_returns,
    realized_volatility,
    realized_volatility_series,
)


def _write(tmp_path, text, name="prices.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = _write(tmp_path, "date,close\n2018-01-01,100\n2018-01-02,101\n2018-01-03,102\n")
    prices, extra = load_price_panel(p)
    assert len(prices) == 3
    assert_allclose(prices.close, [100, 101, 102])
    assert extra == {}


def test_load_duplicate_date_names_it(tmp_path):
    p = _write(tmp_path, "date,close\n2018-01-01,100\n2018-01-01,101\n2018-01-03,102\n")
    with pytest.raises(DataError, match="2018-01-01"):
        load_price_panel(p)


def test_load_shuffled_equals_sorted(tmp_path):
    a = _write(tmp_path, "date,close,gold\n2018-01-01,100,5\n2018-01-02,101,6\n2018-01-03,102,7\n", "a.csv")
    b = _write(tmp_path, "date,close,gold\n2018-01-03,102,7\n2018-01-01,100,5\n2018-01-02,101,6\n", "b.csv")
    pa, ea = load_price_panel(a)
    pb, eb = load_price_panel(b)
    assert np.array_equal(pa.dates, pb.dates)
    assert np.array_equal(pa.close, pb.close)
    assert np.array_equal(ea["gold"], eb["gold"])


def test_load_schema_map(tmp_path):
    p = _write(tmp_path, "Day,Close,Oil\n2018-01-01,100,1\n2018-01-02,99,2\n")
    prices, extra = load_price_panel(p, {"date": "Day", "close": "Close"})
    assert list(extra) == ["Oil"]
    assert prices.close[1] == 99


def test_load_malformed_row_reports_line(tmp_path):
    p = _write(tmp_path, "date,close\n2018-01-01,100\n2018-01-02,abc\n")
    with pytest.raises(DataError, match=":3:"):
        load_price_panel(p)


def test_load_nonpositive_price(tmp_path):
    p = _write(tmp_path, "date,close\n2018-01-01,100\n2018-01-02,0\n")
    with pytest.raises(DataError, match="non-positive"):
        load_price_panel(p)


def _prices(close):
    dates = np.datetime64("2018-01-01") + np.arange(len(close))
    return PriceSeries(dates, close)


@pytest.mark.parametrize(
    "close, expected",
    [
        ([100, 100], [0.0]),
        ([100, 100 * np.exp(0.01)], [1.0]),
        ([100, 110, 99], [9.531, -10.536]),
    ],
)
def test_log_returns(close, expected):
    r = log_returns(_prices(close))
    assert len(r) == len(close) - 1
    assert_allclose(r.values, expected, atol=1e-3)


def test_log_returns_too_short():
    with pytest.raises(DataError):
        PriceSeries(np.array(["2018-01-01"], dtype="datetime64[D]"), [100.0])


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=50))
def test_log_return_roundtrip(rets):
    close = 100.0 * np.exp(np.r_[0.0, np.cumsum(rets)] / 100.0)
    assert_allclose(log_returns(_prices(close)).values, rets, atol=1e-10)


@pytest.mark.parametrize(
    "returns, t, expected",
    [([2, 2, 2], 2, 0.0), ([1, -1], 1, 1.0), ([0, 0, 3], 2, np.sqrt(2))],
)
def test_realized_volatility(returns, t, expected):
    assert realized_volatility(returns, t) == pytest.approx(expected, abs=1e-12)


def test_realized_volatility_needs_two_returns():
    with pytest.raises(DataError):
        realized_volatility([1.0, 2.0], 0)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(-100, 100))
def test_realized_volatility_shift_invariant(rets, shift):
    t = len(rets) - 1
    a = realized_volatility(rets, t)
    b = realized_volatility(np.asarray(rets) + shift, t)
    assert b == pytest.approx(a, abs=1e-8)


def test_realized_volatility_series_matches_pointwise():
    r = np.random.default_rng(0).normal(size=40)
    series = realized_volatility_series(r)
    assert np.isnan(series[0])
    for t in range(1, 40):
        assert series[t] == pytest.approx(realized_volatility(r, t), abs=1e-10)


def test_align_monthly_step_function():
    daily = np.arange(np.datetime64("2018-01-02"), np.datetime64("2018-02-06"))
    panel = align_panel(daily, {"close": np.ones(len(daily))},
                        {"cpi": (np.array(["2018-01-01", "2018-02-01"], dtype="datetime64[D]"), [95.0, 96.0])})
    cpi = panel["cpi"]
    jan = panel.dates < np.datetime64("2018-02-01")
    assert np.all(cpi[jan] == 95.0)
    assert np.all(cpi[~jan] == 96.0)


def test_align_all_daily_identity():
    dates = np.arange(np.datetime64("2018-01-01"), np.datetime64("2018-01-11"))
    cols = {"a": np.arange(10.0), "b": np.arange(10.0) ** 2}
    panel = align_panel(dates, cols)
    assert np.array_equal(panel.dates, dates)
    for k in cols:
        assert np.array_equal(panel[k], cols[k])


def test_align_rejects_daily_before_monthly():
    dates = np.arange(np.datetime64("2017-12-20"), np.datetime64("2018-01-10"))
    with pytest.raises(DataError, match="cpi"):
        align_panel(dates, {}, {"cpi": (np.array(["2018-01-01"], dtype="datetime64[D]"), [95.0])})


def test_align_drops_head_gaps_and_fills_interior():
    dates = np.arange(np.datetime64("2018-01-01"), np.datetime64("2018-01-07"))
    a = np.array([np.nan, np.nan, 1.0, np.nan, 3.0, 4.0])
    panel = align_panel(dates, {"a": a, "b": np.arange(6.0)})
    assert len(panel) == 4
    assert_allclose(panel["a"], [1.0, 1.0, 3.0, 4.0])
    for row in panel.matrix():
        assert not np.any(np.isnan(row))


def test_build_features_shapes():
    close = 100 * np.exp(np.cumsum(np.random.default_rng(1).normal(size=30)) / 100)
    panel = build_features(_prices(close))
    assert panel.names == ["close", "log_return", "realized_vol"]
    assert len(panel) == 28
    assert not np.isnan(panel.matrix()).any()


def test_panel_csv_roundtrip(tmp_path):
    dates = np.arange(np.datetime64("2018-01-01"), np.datetime64("2018-01-06"))
    panel = FeaturePanel(dates, {"x": np.random.default_rng(2).normal(size=5), "y": np.arange(5.0)})
    panel.to_csv(tmp_path / "p.csv")
    back = FeaturePanel.from_csv(tmp_path / "p.csv")
    assert np.array_equal(back.dates, panel.dates)
    assert np.array_equal(back.matrix(), panel.matrix())
