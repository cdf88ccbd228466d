import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import auc_concordance
from stockews.evaluation import (
    ConfusionMatrix,
    UndefinedMetricError,
    accuracy,
    bce_loss,
    confusion,
    crisis_recall,
    kfold_indices,
    metrics_report,
    onset_analysis,
    rising_edges,
    rmse,
    roc_auc,
    sar,
    tpr_fpr,
)

binary = st.lists(st.integers(0, 1), min_size=1, max_size=60)


def test_confusion_enumeration():
    assert confusion([1, 1, 0, 0], [1, 0, 1, 0]) == ConfusionMatrix(tp=1, fn=1, fp=1, tn=1)


@given(binary)
def test_confusion_identity_and_complement(y):
    same = confusion(y, y)
    assert same.fn == 0 and same.fp == 0
    flip = confusion(y, [1 - v for v in y])
    assert flip.tp == 0 and flip.tn == 0


@given(binary, st.data())
def test_accuracy_integer_identity(y, data):
    s = data.draw(st.lists(st.integers(0, 1), min_size=len(y), max_size=len(y)))
    cm = confusion(y, s)
    assert cm.total == len(y)
    assert round(accuracy(cm) * cm.total) == cm.tp + cm.tn


def test_confusion_length_mismatch():
    with pytest.raises(ValueError):
        confusion([1, 0], [1])


def test_accuracy_fixture():
    assert accuracy(ConfusionMatrix(tp=3, fn=1, fp=1, tn=5)) == pytest.approx(0.8)


def test_perfect_classifier():
    cm = confusion([1, 0, 1, 0], [1, 0, 1, 0])
    assert accuracy(cm) == 1.0
    assert tpr_fpr(cm) == (1.0, 0.0)


def test_crisis_recall_scale_example():
    cm = ConfusionMatrix(tp=200, fn=7, fp=10, tn=512)
    assert 100 * crisis_recall(cm) == pytest.approx(96.6, abs=0.05)


@pytest.mark.parametrize(
    "cm, metric",
    [
        (ConfusionMatrix(0, 0, 0, 0), "accuracy"),
        (ConfusionMatrix(0, 0, 2, 3), "tpr"),
        (ConfusionMatrix(2, 1, 0, 0), "fpr"),
    ],
)
def test_undefined_metrics_are_named(cm, metric):
    with pytest.raises(UndefinedMetricError) as err:
        accuracy(cm) if metric == "accuracy" else tpr_fpr(cm)
    assert err.value.metric == metric


@pytest.mark.parametrize(
    "y, p, expected",
    [([1], [0.5], math.log(2)), ([1, 0], [0.9, 0.2], (-math.log(0.9) - math.log(0.8)) / 2)],
)
def test_bce_fixtures(y, p, expected):
    assert bce_loss(y, p) == pytest.approx(expected, abs=1e-12)


def test_bce_perfect_is_near_zero():
    assert bce_loss([1, 0, 1], [1.0, 0.0, 1.0]) < 1e-6


@given(st.integers(1, 50), st.integers(1, 50))
def test_bce_constant_prevalence_is_entropy(pos, neg):
    y = np.r_[np.ones(pos), np.zeros(neg)]
    q = pos / (pos + neg)
    entropy = -(q * math.log(q) + (1 - q) * math.log(1 - q))
    assert bce_loss(y, np.full(len(y), q)) == pytest.approx(entropy, abs=1e-9)


def test_auc_fixtures():
    assert roc_auc([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.1])[1] == 1.0
    assert roc_auc([1, 0, 0, 1], [0.9, 0.4, 0.6, 0.1])[1] == pytest.approx(0.5)


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        roc_auc([1, 1, 1], [0.2, 0.5, 0.7])


def test_auc_ties_share_threshold():
    pts, auc = roc_auc([1, 0], [0.5, 0.5])
    assert auc == pytest.approx(0.5)
    assert pts.tolist() == [[0.0, 0.0], [1.0, 1.0]]


@settings(max_examples=100)
@given(st.integers(0, 10_000), st.integers(4, 80))
def test_auc_equals_concordance(seed, n):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    assume(0 < y.sum() < n)
    s = rng.permutation(n) / n
    assert roc_auc(y, s)[1] == pytest.approx(auc_concordance(y, s), abs=1e-10)


@given(st.integers(0, 10_000))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 40)
    assume(0 < y.sum() < 40)
    s = rng.normal(size=40)
    assert roc_auc(y, np.exp(3 * s) + 1)[1] == pytest.approx(roc_auc(y, s)[1], abs=1e-12)


@given(st.integers(0, 10_000))
def test_roc_points_monotone_and_anchored(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 30)
    assume(0 < y.sum() < 30)
    pts, _ = roc_auc(y, np.round(rng.uniform(size=30), 1))
    assert pts[0].tolist() == [0.0, 0.0]
    assert pts[-1].tolist() == [1.0, 1.0]
    assert np.all(np.diff(pts, axis=0) >= 0)


def test_sar_fixtures():
    assert sar(1, 1, 0) == 1.0
    assert sar(0.9, 0.9, 0.3) == pytest.approx(0.8333, abs=1e-4)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_sar_symmetric(a, b, r):
    assert sar(a, b, r) == pytest.approx(sar(b, a, r), abs=1e-15)


def test_rmse():
    assert rmse([1, 0], [0.5, 0.5]) == pytest.approx(0.5)


def test_metrics_report_fields():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 50)
    p = np.clip(y * 0.6 + rng.uniform(0, 0.4, 50), 0, 1)
    rep = metrics_report(y, p, cutoff=0.5)
    d = json.loads(rep.to_json())
    for key in ("accuracy", "bce_loss", "tpr", "fpr", "auc", "rmse", "sar", "crisis_recall"):
        assert d[key] is not None
    assert rep.n == 50
    assert 0 <= rep.accuracy <= 1 and rep.bce_loss >= 0


def test_rising_edges():
    assert rising_edges([0, 0, 1, 1, 0, 1]).tolist() == [2, 5]
    assert rising_edges([1, 0, 1]).tolist() == [0, 2]


def test_onset_single_edge():
    rep = onset_analysis([0, 0, 1], [0, 1, 1], horizon=3)
    assert rep.total_onsets == 1 and rep.predicted_onsets == 1
    assert rep.avg_days_ahead == 1.0
    assert rep.false_onset_alarms_pct == 0.0


def test_onset_missed_and_false_alarm():
    y = [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0]
    s = [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
    rep = onset_analysis(y, s, horizon=2)
    assert rep.predicted_onsets == 0
    assert math.isnan(rep.avg_days_ahead)
    assert rep.false_onset_alarms_pct == 100.0


@given(binary, st.data(), st.integers(0, 6))
def test_onset_report_ranges(y, data, h):
    s = data.draw(st.lists(st.integers(0, 1), min_size=len(y), max_size=len(y)))
    rep = onset_analysis(y, s, h)
    assert 0 <= rep.predicted_onsets <= rep.total_onsets
    assert rep.correct_predictions <= rep.total_crisis_days
    assert 0 <= rep.false_onset_alarms_pct <= 100
    if rep.total_onsets:
        assert 0 <= rep.pct_onsets <= 100
    if rep.predicted_onsets:
        assert 0 <= rep.avg_days_ahead <= h


def test_kfold_indices():
    folds = kfold_indices(10, 5)
    assert [len(f) for f in folds] == [2] * 5
    assert np.array_equal(np.concatenate(folds), np.arange(10))
    assert len(kfold_indices(7, 7)) == 7
    with pytest.raises(ValueError):
        kfold_indices(3, 4)
    with pytest.raises(ValueError):
        kfold_indices(10, 1)
