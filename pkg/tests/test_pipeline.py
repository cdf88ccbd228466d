import numpy as np
import pytest

from stockews.data import FeaturePanel
from stockews.neural import TrainConfig
from stockews.pipeline import (
    EwsConfig,
    _digest,
    read_records,
    replay_signals,
    run_ews,
    split_train_test,
    write_records,
)
from stockews.synthetic import synthetic_panel

FAST_TRAIN = TrainConfig(epochs=2, hidden=4, batch_size=20, learning_rate=0.3)


def fast_config(**kw):
    base = dict(refit_stride=25, retrain_stride=50, starts=1, train=FAST_TRAIN, seed=1)
    base.update(kw)
    return EwsConfig(**base)


@pytest.fixture(scope="module")
def panel():
    return synthetic_panel(length=180, seed=2)


@pytest.fixture(scope="module")
def run(panel):
    return run_ews(panel, fast_config(), audit=True)


def _rows(n):
    dates = np.datetime64("2020-01-01") + np.arange(n)
    return FeaturePanel(dates, {"x": np.arange(float(n)), "log_return": np.sin(np.arange(n))})


def test_split_seventy_thirty():
    train, test = split_train_test(_rows(100), 0.7)
    assert (len(train), len(test)) == (70, 30)


def test_split_then_concat_is_identity():
    p = _rows(57)
    train, test = split_train_test(p, 0.7, window=5)
    back = FeaturePanel.concat([train, test])
    assert np.array_equal(back.dates, p.dates)
    assert np.array_equal(back.matrix(), p.matrix())


def test_split_at_sample_scale():
    _, test = split_train_test(_rows(2434), 0.7, window=5)
    assert abs(len(test) - 729) <= 1


def test_split_rejects_tiny_test():
    with pytest.raises(ValueError):
        split_train_test(_rows(10), 0.7, window=5)
    with pytest.raises(ValueError):
        split_train_test(_rows(10), 1.0)


def test_ten_rows_give_five_records():
    recs = run_ews(synthetic_panel(length=10, seed=0), fast_config()).records
    assert len(recs) == 5
    assert all(r.suppressed for r in recs)


def test_record_count_and_dates(panel, run):
    l = 5
    assert len(run) == len(panel) - l
    assert run.records[0].date == panel.dates[l]
    assert run.records[-1].date == panel.dates[-1]
    for r in run.records:
        assert r.as_of < r.date


def test_records_after_warmup_are_live(panel, run):
    live = [r for r in run.records if not r.suppressed]
    assert live
    for r in live:
        assert 0 <= r.prob_high <= 1 and 0 <= r.cutoff <= 1 and 0 < r.y_hat < 1
        assert r.signal == int(r.y_hat >= r.cutoff)
    for r in run.records[:-1]:
        if not r.suppressed:
            assert r.true_label in (0, 1)


def test_audit_sees_only_past_rows(panel, run):
    for a in run.audit:
        assert a.n_rows == a.t + 1
        assert a.last_date == panel.dates[a.t]
        assert a.digest == _digest(panel.slice(0, a.t + 1))


def test_future_perturbation_leaves_past_records(panel, run):
    cut = 150
    cols = {n: panel[n].copy() for n in panel.names}
    rng = np.random.default_rng(0)
    for n in cols:
        cols[n][cut:] = cols[n][cut:] * 3.0 + rng.normal(size=len(panel) - cut)
    other = run_ews(FeaturePanel(panel.dates, cols), fast_config(), audit=True)
    for a, b in zip(run.audit, other.audit):
        assert (a.digest == b.digest) == (a.t < cut)
    for a, b in zip(run.records, other.records):
        # the record for t+1 is fixed at step t; its true label comes from step t+1
        if a.as_of < panel.dates[cut]:
            assert (a.y_hat, a.signal, a.cutoff) == (b.y_hat, b.signal, b.cutoff) or np.isnan(a.y_hat)


def test_run_is_deterministic(panel, run):
    again = run_ews(panel, fast_config())
    assert [(r.y_hat, r.signal) for r in again.records] == [(r.y_hat, r.signal) for r in run.records] or \
        all(np.isnan(a.y_hat) == np.isnan(b.y_hat) for a, b in zip(again.records, run.records))
    live = [(a.y_hat, b.y_hat) for a, b in zip(again.records, run.records) if not a.suppressed]
    assert all(x == y for x, y in live)


def test_replay_lower_cutoff_is_superset(run):
    hi = replay_signals(run.records, 0.6)
    lo = replay_signals(run.records, 0.3)
    assert np.all(lo >= hi)


def test_records_csv_roundtrip(run, tmp_path):
    write_records(run.records, tmp_path / "w.csv")
    back = read_records(tmp_path / "w.csv")
    assert len(back) == len(run.records)
    for a, b in zip(run.records, back):
        assert a.date == b.date and a.signal == b.signal and a.suppressed == b.suppressed
        assert a.true_label == b.true_label
        assert (np.isnan(a.y_hat) and np.isnan(b.y_hat)) or a.y_hat == b.y_hat


def test_bpnn_predictor_and_once_mode(panel):
    r = run_ews(panel, fast_config(predictor="bpnn", retrain="once"))
    assert len(r) == len(panel) - 5
    assert any(not x.suppressed for x in r.records)


@pytest.fixture(scope="module")
def once_and_daily():
    p = synthetic_panel(length=220, seed=5, exogenous=False)
    once = run_ews(p, fast_config(refit_stride=len(p), retrain="once", starts=2))
    daily = run_ews(p, fast_config(refit_stride=1, retrain="once", starts=2))
    return once, daily


def _live_labels(run):
    return np.array([r.prob_high >= r.cutoff for r in run.records if not r.suppressed])


def test_single_fit_vs_daily_refit_labels_agree(once_and_daily):
    once, daily = once_and_daily
    assert np.mean(_live_labels(once) == _live_labels(daily)) >= 0.9


@pytest.mark.xfail(reason="leftmost-valley cutoff wanders inside a broad empty valley; see decisions ledger",
                   strict=False)
def test_single_fit_vs_daily_refit_cutoffs_agree(once_and_daily):
    once, daily = once_and_daily
    assert np.mean(np.abs(once.cutoffs - daily.cutoffs)) < 0.1


def test_config_roundtrip():
    cfg = EwsConfig(window=10, refit_stride=3, predictor="bpnn", seed=4)
    import json

    back = EwsConfig.from_dict(json.loads(cfg.to_json()))
    assert back == cfg
    with pytest.raises(ValueError):
        EwsConfig.from_dict({"windw": 3})


@pytest.mark.parametrize("kw", [dict(window=0), dict(refit_stride=0), dict(split=1.0), dict(predictor="svr")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EwsConfig(**kw)


def test_config_seed_fans_out_to_predictor():
    assert EwsConfig(seed=1).train.seed != EwsConfig(seed=2).train.seed
    assert EwsConfig(window=7).train.window == 7
