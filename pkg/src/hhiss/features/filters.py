"""Zero-phase Butterworth filtering and gap repair for wrist signals."""

from __future__ import annotations

import logging

import numpy as np
from scipy import signal

from ..errors import DataError

log = logging.getLogger(__name__)

BVP_BAND = (0.5, 8.0)
BVP_ORDER = 4
EDA_CUTOFF = 3.0
EDA_ORDER = 4
MAX_GAP_S = 5.0
# samples on each side of a gap used for the quartic fit
GAP_FLANK_S = 1.0
# the requested EDA cutoff is clamped to this fraction of Nyquist when the rate cannot represent it
NYQUIST_CLAMP = 0.9
# overshoot of the zero-phase EDA low-pass step response, as a fraction of the step height
EDA_RINGING_BOUND = 0.05


def _sosfiltfilt(sos, x):
    padlen = 3 * (2 * len(sos) + 1)
    if len(x) <= padlen:
        raise DataError(f"segment of {len(x)} samples is shorter than the filter warm-up ({padlen + 1})")
    return signal.sosfiltfilt(sos, x)


def lowpass(x, fs: float, cutoff: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth low-pass; ``cutoff`` is clamped below Nyquist."""
    cutoff = min(cutoff, NYQUIST_CLAMP * fs / 2.0)
    sos = signal.butter(order, cutoff, btype="lowpass", fs=fs, output="sos")
    return _sosfiltfilt(sos, np.asarray(x, dtype=np.float64))


def bandpass(x, fs: float, band=BVP_BAND, order: int = BVP_ORDER) -> np.ndarray:
    lo, hi = band
    hi = min(hi, NYQUIST_CLAMP * fs / 2.0)
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return _sosfiltfilt(sos, np.asarray(x, dtype=np.float64))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open ``[start, stop)`` runs where ``mask`` is true."""
    d = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def fill_gaps(x, fs: float, max_gap_s: float = MAX_GAP_S, flank_s: float = GAP_FLANK_S) -> np.ndarray:
    """Fill NaN gaps up to ``max_gap_s`` with a quartic fitted to the flanking samples.

    Longer gaps, and gaps without enough flanking data, are left as NaN; the
    caller treats them as session breaks.
    """
    x = np.array(x, dtype=np.float64)
    gaps = _runs(np.isnan(x))
    flank = max(int(round(flank_s * fs)), 3)
    for start, stop in gaps:
        if (stop - start) / fs > max_gap_s:
            continue
        left = np.arange(max(0, start - flank), start)
        right = np.arange(stop, min(len(x), stop + flank))
        idx = np.concatenate([left, right])
        idx = idx[~np.isnan(x[idx])]
        if len(idx) < 5 or len(left) == 0 or len(right) == 0:
            continue
        # centre the abscissa so the degree-4 fit stays well conditioned
        c = 0.5 * (start + stop)
        coef = np.polyfit(idx - c, x[idx], 4)
        x[start:stop] = np.polyval(coef, np.arange(start, stop) - c)
    return x


def segments(x: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous finite runs of ``x``."""
    return _runs(np.isfinite(x))


def preprocess_bvp(raw, fs: float = 64.0) -> np.ndarray:
    """Quartic gap fill, then 0.5-8 Hz zero-phase band-pass per contiguous segment.

    Samples inside unrepaired gaps, and segments too short to filter, come
    back as NaN.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.size == 0 or np.all(np.isnan(x)):
        raise DataError("BVP signal has no valid samples")
    x = fill_gaps(x, fs)
    out = np.full_like(x, np.nan)
    for a, b in segments(x):
        try:
            out[a:b] = bandpass(x[a:b], fs)
        except DataError:
            log.debug("dropping %d-sample BVP segment too short to filter", b - a)
    return out


def preprocess_eda(raw, fs: float = 4.0) -> np.ndarray:
    """4th-order zero-phase low-pass at 3 Hz (clamped to 0.9 x Nyquist at low rates)."""
    x = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("EDA signal contains non-finite samples")
    return lowpass(x, fs, EDA_CUTOFF, EDA_ORDER)
