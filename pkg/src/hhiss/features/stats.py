"""Per-channel window statistics.

Every statistic maps a finite 1-D array to a finite float.  Degenerate
conventions for constant input: skewness, kurtosis, slope and every entropy
are 0.
"""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np
from scipy import signal, stats

HIST_BINS = 10
EMBED_DIM = 3


def _skew(x):
    if np.ptp(x) == 0:
        return 0.0
    return float(stats.skew(x))


def _kurtosis(x):
    # excess kurtosis
    if np.ptp(x) == 0:
        return 0.0
    return float(stats.kurtosis(x))


def _shannon_entropy(x):
    if np.ptp(x) == 0:
        return 0.0
    counts, _ = np.histogram(x, bins=HIST_BINS)
    p = counts[counts > 0] / x.size
    return float(-(p * np.log2(p)).sum())


def _embed(x, dim=EMBED_DIM):
    n = x.size - dim + 1
    if n < 1:
        return np.empty((0, dim))
    return np.lib.stride_tricks.sliding_window_view(x, dim)


def _svd_entropy(x):
    emb = _embed(x)
    if emb.shape[0] == 0 or np.ptp(x) == 0:
        return 0.0
    s = np.linalg.svd(emb, compute_uv=False)
    total = s.sum()
    if total <= 0:
        return 0.0
    p = s / total
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _perm_entropy(x):
    """Normalised permutation entropy of order 3, delay 1."""
    emb = _embed(x)
    if emb.shape[0] == 0 or np.ptp(x) == 0:
        return 0.0
    patterns = np.argsort(emb, axis=1, kind="stable")
    codes = patterns @ (EMBED_DIM ** np.arange(EMBED_DIM))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum() / math.log2(math.factorial(EMBED_DIM)))


def _slope(x):
    if x.size < 2 or np.ptp(x) == 0:
        return 0.0
    t = np.arange(x.size, dtype=np.float64)
    return float(np.polyfit(t, x, 1)[0])


def _mean_crossings(x):
    c = np.sign(x - x.mean())
    c = c[c != 0]
    return float(np.count_nonzero(np.diff(c)))


def _diff(x):
    return np.diff(x) if x.size > 1 else np.zeros(1)


STATISTICS: dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda x: float(np.mean(x)),
    "std": lambda x: float(np.std(x)),
    "var": lambda x: float(np.var(x)),
    "min": lambda x: float(np.min(x)),
    "max": lambda x: float(np.max(x)),
    "median": lambda x: float(np.median(x)),
    "peak_to_peak": lambda x: float(np.ptp(x)),
    "sum": lambda x: float(np.sum(x)),
    "energy": lambda x: float(np.sum(x * x)),
    "rms": lambda x: float(np.sqrt(np.mean(x * x))),
    "skewness": _skew,
    "kurtosis": _kurtosis,
    "p5": lambda x: float(np.percentile(x, 5)),
    "p25": lambda x: float(np.percentile(x, 25)),
    "p75": lambda x: float(np.percentile(x, 75)),
    "p95": lambda x: float(np.percentile(x, 95)),
    "iqr": lambda x: float(np.subtract(*np.percentile(x, [75, 25]))),
    "mean_abs_deviation": lambda x: float(np.mean(np.abs(x - x.mean()))),
    "count_above_mean": lambda x: float(np.count_nonzero(x > x.mean())),
    "count_below_mean": lambda x: float(np.count_nonzero(x < x.mean())),
    "line_integral": lambda x: float(np.sum(np.abs(_diff(x)))),
    "mean_abs_change": lambda x: float(np.mean(np.abs(_diff(x)))),
    "mean_change": lambda x: float((x[-1] - x[0]) / (x.size - 1)) if x.size > 1 else 0.0,
    "std_first_diff": lambda x: float(np.std(_diff(x))),
    "n_peaks": lambda x: float(len(signal.find_peaks(x)[0])),
    "mean_crossings": _mean_crossings,
    "shannon_entropy": _shannon_entropy,
    "svd_entropy": _svd_entropy,
    "perm_entropy": _perm_entropy,
    "slope": _slope,
    "argmax_fraction": lambda x: float(np.argmax(x) / x.size),
    "argmin_fraction": lambda x: float(np.argmin(x) / x.size),
}


def compute(name: str, x) -> float:
    return STATISTICS[name](np.asarray(x, dtype=np.float64))
