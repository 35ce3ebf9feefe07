"""Tonic/phasic split of skin conductance and SCR event detection."""

from __future__ import annotations

import numpy as np
from scipy import signal

from ..errors import DataError
from .filters import _sosfiltfilt

TONIC_CUTOFF = 0.05
TONIC_ORDER = 2
SCR_THRESHOLD = 0.05


def decompose_eda(filtered, fs: float = 4.0, cutoff: float = TONIC_CUTOFF) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(tonic, phasic)``: tonic is a zero-phase low-pass, phasic the residual.

    ``tonic + phasic`` reproduces the input up to float rounding.
    """
    x = np.asarray(filtered, dtype=np.float64)
    sos = signal.butter(TONIC_ORDER, cutoff, btype="lowpass", fs=fs, output="sos")
    try:
        tonic = _sosfiltfilt(sos, x)
    except DataError as exc:
        raise DataError(f"EDA too short for tonic extraction: {exc}") from None
    return tonic, x - tonic


def detect_scr_events(phasic, fs: float = 4.0, threshold: float = SCR_THRESHOLD) -> dict:
    """Skin conductance responses: rises of at least ``threshold`` from onset to peak.

    The onset of a peak is the minimum of the signal since the previous
    accepted peak.  Returns onset/peak indices and amplitudes.
    """
    x = np.asarray(phasic, dtype=np.float64)
    onsets, peaks, amps = [], [], []
    if x.size >= 3:
        cand, _ = signal.find_peaks(x)
        last = 0
        for p in cand:
            o = last + int(np.argmin(x[last : p + 1]))
            amp = x[p] - x[o]
            if amp >= threshold:
                onsets.append(o)
                peaks.append(int(p))
                amps.append(float(amp))
                last = int(p)
    return {
        "onsets": np.asarray(onsets, dtype=np.int64),
        "peaks": np.asarray(peaks, dtype=np.int64),
        "amplitudes": np.asarray(amps, dtype=np.float64),
    }
