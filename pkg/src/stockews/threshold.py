"""Crisis cutoffs from filtering-probability histograms, crisis labels and CMAX."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

FALLBACK_CUTOFF = 0.5
CMAX_LAMBDAS = (1.0, 1.5, 2.0, 2.5)


@dataclass
class SmoothedHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    smoothed: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center", "count", "smoothed"])
            for c, n, s in zip(self.centers, self.counts, self.smoothed):
                w.writerow([repr(float(c)), int(n), repr(float(s))])


@dataclass
class CrisisSeries:
    dates: np.ndarray
    labels: np.ndarray
    cutoff: np.ndarray

    def __len__(self):
        return len(self.labels)

    def to_csv(self, path, prob_high=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "label", "cutoff"] + (["prob_high"] if prob_high is not None else []))
            for i in range(len(self.labels)):
                row = [str(self.dates[i]), int(self.labels[i]), repr(float(self.cutoff[i]))]
                if prob_high is not None:
                    row.append(repr(float(prob_high[i])))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "CrisisSeries":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([r["date"] for r in rows], dtype="datetime64[D]"),
            np.array([int(r["label"]) for r in rows], dtype=np.int64),
            np.array([float(r["cutoff"]) for r in rows]),
        )


def smoothed_histogram(values, bins: int = 50, smooth_window: int = 3) -> SmoothedHistogram:
    """Fixed uniform bins on [0, 1] and a centered moving average that
    averages only over bins that exist near the edges."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty input")
    if bins < 1 or smooth_window < 1:
        raise ValueError("bins and smooth_window must be positive")
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.clip(v, 0.0, 1.0), bins=edges)
    return SmoothedHistogram(edges, counts, _moving_average(counts, smooth_window))


def _moving_average(counts, window):
    half_lo = (window - 1) // 2
    half_hi = window // 2
    c = np.concatenate([[0], np.cumsum(counts)])
    n = len(counts)
    lo = np.clip(np.arange(n) - half_lo, 0, n)
    hi = np.clip(np.arange(n) + half_hi + 1, 0, n)
    return (c[hi] - c[lo]) / (hi - lo)


def find_peaks(smoothed) -> list[int]:
    """Local maxima: a bin, or a flat run of equal bins, higher than both
    outside neighbours. Missing neighbours past the ends count as lower.
    A flat run is reported at its middle bin."""
    s = np.asarray(smoothed, dtype=float)
    n = len(s)
    peaks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        left_ok = i == 0 or s[i - 1] < s[i]
        right_ok = j == n - 1 or s[j + 1] < s[i]
        if left_ok and right_ok and not (i == 0 and j == n - 1):
            peaks.append((i + j) // 2)
        i = j + 1
    return peaks


def select_peaks(smoothed, peaks) -> tuple[int, int] | None:
    """The two tallest peaks; equal heights prefer the more distant pair."""
    if len(peaks) < 2:
        return None
    s = np.asarray(smoothed, dtype=float)
    best = None
    for a in range(len(peaks)):
        for b in range(a + 1, len(peaks)):
            i, j = peaks[a], peaks[b]
            hi, lo = max(s[i], s[j]), min(s[i], s[j])
            key = (hi, lo, j - i)
            if best is None or key > best[0]:
                best = (key, (i, j))
    return best[1]


def valley_bin(smoothed, left: int, right: int) -> int | None:
    """Leftmost minimum strictly between two peak bins."""
    if right - left < 2:
        return None
    inner = np.asarray(smoothed, dtype=float)[left + 1 : right]
    return left + 1 + int(np.argmin(inner))


def two_peak_cutoff(values, bins: int = 50, smooth_window: int = 3, return_details: bool = False):
    """Cutoff at the valley bottom between the two dominant histogram peaks.

    Returns the center of the valley bin, or ``FALLBACK_CUTOFF`` when the
    smoothed histogram is not bimodal. With ``return_details`` the histogram,
    chosen peaks and a fallback flag are returned as well.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("two_peak_cutoff needs at least one value")
    if bins < 5:
        raise ValueError("bins must be >= 5")
    if v.size < 30:
        logger.debug("two-peak cutoff on only %d values", v.size)
    hist = smoothed_histogram(v, bins, smooth_window)
    pair = select_peaks(hist.smoothed, find_peaks(hist.smoothed))
    valley = None if pair is None else valley_bin(hist.smoothed, *pair)
    if valley is None:
        logger.info("two-peak cutoff: no bimodal structure, falling back to %.2f", FALLBACK_CUTOFF)
        cutoff = FALLBACK_CUTOFF
    else:
        cutoff = float(hist.centers[valley])
    if return_details:
        return cutoff, {"histogram": hist, "peaks": pair, "valley": valley, "fallback": valley is None}
    return cutoff


def cutoff_from_counts(counts, smooth_window: int = 1) -> float:
    """Two-peak cutoff for a histogram given directly as counts over uniform bins on [0, 1]."""
    counts = np.asarray(counts, dtype=float)
    edges = np.linspace(0.0, 1.0, len(counts) + 1)
    smoothed = _moving_average(counts, smooth_window)
    pair = select_peaks(smoothed, find_peaks(smoothed))
    valley = None if pair is None else valley_bin(smoothed, *pair)
    if valley is None:
        return FALLBACK_CUTOFF
    return float(0.5 * (edges[valley] + edges[valley + 1]))


def label_crises(prob_high, cutoff, dates=None) -> CrisisSeries:
    p = np.asarray(prob_high, dtype=float)
    c = np.broadcast_to(np.asarray(cutoff, dtype=float), p.shape).copy()
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("cutoff must lie in [0, 1]")
    labels = (p >= c).astype(np.int64)
    if dates is None:
        dates = np.arange(len(p)).astype("datetime64[D]")
    return CrisisSeries(np.asarray(dates, dtype="datetime64[D]"), labels, c)


@dataclass(frozen=True)
class CutoffStats:
    count: int
    mean: float
    std: float
    median: float
    mode: float
    range: float

    def as_dict(self):
        return dict(count=self.count, mean=self.mean, std=self.std, median=self.median,
                    mode=self.mode, range=self.range)


def cutoff_statistics(cutoffs) -> CutoffStats:
    c = np.asarray(cutoffs, dtype=float)
    c = c[~np.isnan(c)]
    if c.size == 0:
        raise ValueError("no cutoffs to summarize")
    rounded = np.round(c, 3)
    vals, counts = np.unique(rounded, return_counts=True)
    mode = float(vals[np.argmax(counts)])  # unique() sorts, so ties go to the smallest
    return CutoffStats(
        count=int(c.size),
        mean=float(c.mean()),
        std=float(c.std(ddof=1)) if c.size > 1 else 0.0,
        median=float(np.median(c)),
        mode=mode,
        range=float(c.max() - c.min()),
    )


def cmax_index(close, window: int) -> np.ndarray:
    """close_t over its trailing ``window``-day maximum, for t >= window - 1."""
    p = np.asarray(close, dtype=float)
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(p) <= window:
        raise ValueError("need more prices than the window length")
    views = np.lib.stride_tricks.sliding_window_view(p, window)
    return p[window - 1 :] / views.max(axis=1)


def cmax_labels(prices, window: int = 60, lam: float = 2.0) -> CrisisSeries:
    """Crash labels 1{CMAX_t < mu_t - lam * sigma_t} with expanding-window mean and st.dev."""
    close = getattr(prices, "close", prices)
    dates = getattr(prices, "dates", None)
    cm = cmax_index(close, window)
    n = np.arange(1, len(cm) + 1)
    mu = np.cumsum(cm) / n
    var = np.maximum(np.cumsum(cm * cm) / n - mu**2, 0.0)
    thresh = mu - lam * np.sqrt(var)
    labels = (cm < thresh).astype(np.int64)
    if dates is None:
        out_dates = np.arange(len(cm)).astype("datetime64[D]")
    else:
        out_dates = np.asarray(dates, dtype="datetime64[D]")[window - 1 :]
    return CrisisSeries(out_dates, labels, thresh)
