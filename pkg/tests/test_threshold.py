import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from stockews.threshold import (
    CMAX_LAMBDAS,
    FALLBACK_CUTOFF,
    CrisisSeries,
    cmax_index,
    cmax_labels,
    cutoff_from_counts,
    cutoff_statistics,
    find_peaks,
    label_crises,
    smoothed_histogram,
    two_peak_cutoff,
)

probs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=200)


def test_separated_clusters_ten_bins():
    rng = np.random.default_rng(0)
    v = np.r_[rng.uniform(0.05, 0.15, 60), rng.uniform(0.85, 0.95, 40)]
    c, info = two_peak_cutoff(v, bins=10, smooth_window=1, return_details=True)
    assert 0.15 < c < 0.85
    sm = info["histogram"].smoothed
    lo, hi = info["peaks"]
    interior = sm[lo + 1 : hi]
    assert sm[info["valley"]] == interior.min()
    assert info["valley"] == lo + 1 + int(np.argmin(interior))


def test_symmetric_seven_bin_fixture():
    assert cutoff_from_counts([5, 20, 5, 0, 5, 20, 5]) == pytest.approx(0.5)


def test_unimodal_falls_back():
    v = np.random.default_rng(1).normal(0.1, 0.005, 200)
    c, info = two_peak_cutoff(v, return_details=True)
    assert c == FALLBACK_CUTOFF
    assert info["fallback"]


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        two_peak_cutoff([])


def test_too_few_bins_rejected():
    with pytest.raises(ValueError):
        two_peak_cutoff([0.1, 0.9], bins=4)


def test_valley_tie_goes_left():
    # two empty bins between the peaks: the lower one wins
    assert cutoff_from_counts([10, 0, 0, 10, 1, 1]) == pytest.approx(1.5 / 6)


def test_plateau_is_one_peak():
    assert find_peaks(np.array([0, 3, 3, 3, 0, 1, 0], dtype=float)) == [2, 5]


def test_histogram_counts_sum_to_sample_size():
    v = np.random.default_rng(2).uniform(size=137)
    h = smoothed_histogram(v, bins=20)
    assert h.counts.sum() == 137
    assert len(h.smoothed) == len(h.counts)
    assert np.all(np.diff(h.bin_edges) > 0)
    assert h.bin_edges[0] == 0.0 and h.bin_edges[-1] == 1.0


@settings(max_examples=60, deadline=None)
@given(probs, st.integers(2, 5))
def test_cutoff_invariant_under_duplication(values, k):
    assert two_peak_cutoff(values) == two_peak_cutoff(np.tile(values, k))


@settings(max_examples=80, deadline=None)
@given(probs)
def test_cutoff_between_peaks_or_fallback(values):
    c, info = two_peak_cutoff(values, return_details=True)
    if info["fallback"]:
        assert c == FALLBACK_CUTOFF
    else:
        centers = info["histogram"].centers
        lo, hi = info["peaks"]
        assert centers[lo] < c < centers[hi]


def test_label_examples():
    assert list(label_crises([0.2, 0.6, 0.9], 0.5).labels) == [0, 1, 1]
    p = np.random.default_rng(3).uniform(size=30)
    assert np.all(label_crises(p, 0.0).labels == 1)
    assert list(label_crises([0.3, 1.0, 0.999999], 1.0).labels) == [0, 1, 0]
    with pytest.raises(ValueError):
        label_crises(p, 1.0 + 1e-9)


@given(probs, st.floats(0, 1), st.floats(0, 1))
def test_label_monotone_in_cutoff(values, a, b):
    c1, c2 = sorted((a, b))
    low = label_crises(values, c1).labels
    high = label_crises(values, c2).labels
    assert np.all(high <= low)


def test_crisis_series_csv_roundtrip(tmp_path):
    dates = np.datetime64("2020-01-01") + np.arange(4)
    s = label_crises([0.1, 0.7, 0.5, 0.2], 0.45, dates)
    s.to_csv(tmp_path / "c.csv", prob_high=[0.1, 0.7, 0.5, 0.2])
    back = CrisisSeries.from_csv(tmp_path / "c.csv")
    assert np.array_equal(back.labels, s.labels)
    assert np.array_equal(back.dates, s.dates)
    assert_allclose(back.cutoff, 0.45)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "date,label,cutoff,prob_high"


def test_cutoff_statistics():
    s = cutoff_statistics([0.4, 0.4, 0.6])
    assert s.count == 3
    assert s.mean == pytest.approx(0.4667, abs=1e-4)
    assert s.median == pytest.approx(0.4)
    assert s.mode == pytest.approx(0.4)
    assert s.range == pytest.approx(0.2)
    one = cutoff_statistics([0.5])
    assert one.std == 0.0 and one.range == 0.0
    with pytest.raises(ValueError):
        cutoff_statistics([])


def test_cutoff_mode_ties_to_smallest():
    assert cutoff_statistics([0.3, 0.2, 0.3, 0.2]).mode == pytest.approx(0.2)


def test_cmax_rising_prices():
    close = np.linspace(10, 20, 100)
    assert_allclose(cmax_index(close, 10), 1.0)
    assert not cmax_labels(close, window=10).labels.any()


def test_cmax_halving():
    close = np.r_[np.full(10, 100.0), 50.0]
    assert cmax_index(close, 5)[-1] == pytest.approx(0.5)


@pytest.mark.parametrize("lam", CMAX_LAMBDAS)
def test_cmax_lambda_grid(lam):
    close = 100 * np.exp(np.cumsum(np.random.default_rng(4).normal(0, 0.02, 400)))
    s = cmax_labels(close, window=20, lam=lam)
    assert len(s) == 400 - 19
    assert set(np.unique(s.labels)) <= {0, 1}


def test_cmax_larger_lambda_flags_fewer_days():
    close = 100 * np.exp(np.cumsum(np.random.default_rng(5).normal(0, 0.02, 600)))
    counts = [cmax_labels(close, 30, lam).labels.sum() for lam in CMAX_LAMBDAS]
    assert counts == sorted(counts, reverse=True)


@given(st.lists(st.floats(0.1, 1000), min_size=6, max_size=80), st.integers(2, 5))
def test_cmax_in_unit_interval(close, window):
    cm = cmax_index(close, window)
    assert np.all(cm > 0) and np.all(cm <= 1)


def test_cmax_constant_series():
    assert_allclose(cmax_index(np.full(30, 7.0), 6), 1.0)
