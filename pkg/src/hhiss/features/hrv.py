"""Systolic peak detection and time-domain heart-rate-variability metrics."""

from __future__ import annotations

import numpy as np
from scipy import signal

from ..errors import DataError

REFRACTORY_S = 0.25
# total power integration band of the resampled tachogram (Hz)
TOTAL_POWER_BAND = (0.0033, 0.4)
TACHOGRAM_FS = 4.0

HRV_NAMES = (
    "MeanNN",
    "SDNN",
    "RMSSD",
    "SDSD",
    "pNN20",
    "pNN50",
    "MedianNN",
    "MadNN",
    "MCVNN",
    "CVNN",
    "CVSD",
    "IQRNN",
    "MinNN",
    "MaxNN",
    "MeanHR",
    "TotalPower",
)


def detect_bvp_peaks(filtered, fs: float = 64.0) -> dict:
    """Systolic peaks by local-maximum search with a 250 ms refractory period.

    Returns peak indices, peak times (s) and inter-beat intervals (ms).
    """
    x = np.asarray(filtered, dtype=np.float64)
    if x.size < 2 * fs:
        raise DataError("need at least 2 s of BVP to detect peaks")
    if not np.all(np.isfinite(x)):
        raise DataError("BVP window contains gaps")
    distance = max(1, int(np.ceil(REFRACTORY_S * fs)))
    prominence = 0.25 * np.std(x)
    peaks, _ = signal.find_peaks(x, distance=distance, prominence=prominence if prominence > 0 else None)
    if len(peaks) < 2:
        raise DataError("fewer than two BVP peaks found")
    times = peaks / fs
    return {"peaks": peaks, "times": times, "ibis": np.diff(times) * 1000.0}


def _total_power(ibis: np.ndarray) -> float:
    t = np.cumsum(ibis) / 1000.0
    if t[-1] - t[0] < 2.0 / TACHOGRAM_FS:
        return float(np.var(ibis))
    grid = np.arange(t[0], t[-1], 1.0 / TACHOGRAM_FS)
    tach = np.interp(grid, t, ibis)
    f, pxx = signal.periodogram(tach - tach.mean(), fs=TACHOGRAM_FS)
    lo, hi = TOTAL_POWER_BAND
    sel = (f >= lo) & (f <= hi)
    if sel.sum() < 2:
        return float(np.var(ibis))
    return float(np.trapezoid(pxx[sel], f[sel]))


def hrv_metrics(ibis) -> dict[str, float]:
    """Time-domain HRV over a window's inter-beat intervals (ms).

    With fewer than two intervals every value is NaN; callers treat that as
    a missing HRV block.
    """
    nn = np.asarray(ibis, dtype=np.float64)
    if nn.size < 2:
        return {k: float("nan") for k in HRV_NAMES}
    diff = np.diff(nn)
    mean = nn.mean()
    median = np.median(nn)
    sdnn = nn.std(ddof=1)
    rmssd = np.sqrt(np.mean(diff**2))
    mad = 1.4826 * np.median(np.abs(nn - median))
    q75, q25 = np.percentile(nn, [75, 25])
    return {
        "MeanNN": float(mean),
        "SDNN": float(sdnn),
        "RMSSD": float(rmssd),
        "SDSD": float(diff.std(ddof=1)) if diff.size > 1 else 0.0,
        "pNN20": float(100.0 * np.mean(np.abs(diff) > 20.0)),
        "pNN50": float(100.0 * np.mean(np.abs(diff) > 50.0)),
        "MedianNN": float(median),
        "MadNN": float(mad),
        "MCVNN": float(mad / median),
        "CVNN": float(sdnn / mean),
        "CVSD": float(rmssd / mean),
        "IQRNN": float(q75 - q25),
        "MinNN": float(nn.min()),
        "MaxNN": float(nn.max()),
        "MeanHR": float(60000.0 / mean),
        "TotalPower": _total_power(nn),
    }
