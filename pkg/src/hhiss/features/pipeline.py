"""Session preprocessing, 30 s windowing, feature extraction and change-score normalisation."""

from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from ..data import FeatureDataset
from ..errors import DataError
from .eda import decompose_eda, detect_scr_events
from .filters import preprocess_bvp, preprocess_eda, segments
from .hrv import detect_bvp_peaks, hrv_metrics
from .registry import FeatureRegistry, default_registry
from .session import WINDOW_S, SessionRecord, window_count
from .stats import STATISTICS

log = logging.getLogger(__name__)

HOP_S = 15.0
N_BASELINE = 3


@dataclass(frozen=True)
class FeatureWindow:
    subject_id: str
    session_id: str
    start_s: float
    label: int | None
    features: np.ndarray | None = None
    extent_s: float = WINDOW_S


def window_session(session: SessionRecord, hop_s: float = HOP_S) -> list[FeatureWindow]:
    """Window shells at a 15 s hop; the trailing partial window is dropped.

    Each window takes the annotation label covering its midpoint, or ``None``.
    """
    n = window_count(session.duration, WINDOW_S, hop_s)
    if n == 0:
        raise DataError(f"session {session.session_id} is shorter than one {WINDOW_S:g} s window")
    return [
        FeatureWindow(session.subject_id, session.session_id, k * hop_s, session.label_at(k * hop_s + WINDOW_S / 2))
        for k in range(n)
    ]


def _by_segment(x: np.ndarray, fn) -> np.ndarray:
    out = np.full_like(x, np.nan)
    for a, b in segments(x):
        try:
            out[a:b] = fn(x[a:b])
        except DataError:
            log.debug("segment of %d samples too short to filter", b - a)
    return out


def preprocess_session(session: SessionRecord) -> dict[str, np.ndarray]:
    """Filtered raw channels plus the derived ACC_L2, EDA_tonic and EDA_phasic series.

    Unrepairable gaps stay NaN so that windows touching them are rejected.
    """
    r = session.rates
    ch = session.channels
    eda = _by_segment(ch["EDA"], lambda s: preprocess_eda(s, r["EDA"]))
    tonic = _by_segment(eda, lambda s: decompose_eda(s, r["EDA"])[0])
    acc = [ch[c] for c in ("ACC_X", "ACC_Y", "ACC_Z")]
    n = min(len(a) for a in acc)
    return {
        "EDA": eda,
        "BVP": preprocess_bvp(ch["BVP"], r["BVP"]),
        "TEMP": ch["TEMP"],
        "ACC_X": ch["ACC_X"],
        "ACC_Y": ch["ACC_Y"],
        "ACC_Z": ch["ACC_Z"],
        "HR": ch["HR"],
        "ACC_L2": np.sqrt(sum(a[:n] ** 2 for a in acc)),
        "EDA_tonic": tonic,
        "EDA_phasic": eda - tonic,
    }


def _rates(session: SessionRecord) -> dict[str, float]:
    r = dict(session.rates)
    r.update(ACC_L2=r["ACC_X"], EDA_tonic=r["EDA"], EDA_phasic=r["EDA"])
    return r


def window_signals(processed: dict, rates: dict, start_s: float) -> dict[str, np.ndarray]:
    out = {}
    for c, x in processed.items():
        a = int(round(start_s * rates[c]))
        out[c] = x[a : a + int(round(WINDOW_S * rates[c]))]
    return out


def extract_window_features(signals: dict, rates: dict, registry: FeatureRegistry | None = None) -> np.ndarray:
    """Registry-ordered feature vector for one window.

    Raises
    ------
    DataError
        When a needed channel has a gap or is incomplete inside the window,
        or the HRV block cannot be computed.
    """
    registry = registry or default_registry()
    need = registry.channels
    if "HRV" in need:
        need = need | {"BVP"}
    if "SCR" in need:
        need = need | {"EDA_phasic"}
    for c in need - {"HRV", "SCR"}:
        x = signals.get(c)
        if x is None or len(x) < int(round(WINDOW_S * rates[c])):
            raise DataError(f"channel {c} incomplete in window")
        if not np.all(np.isfinite(x)):
            raise DataError(f"channel {c} has a gap in window")
    hrv = scr = None
    if "HRV" in registry.channels:
        hrv = hrv_metrics(detect_bvp_peaks(signals["BVP"], rates["BVP"])["ibis"])
        if not all(np.isfinite(v) for v in hrv.values()):
            raise DataError("HRV block undefined in window")
    if "SCR" in registry.channels:
        amps = detect_scr_events(signals["EDA_phasic"], rates["EDA_phasic"])["amplitudes"]
        scr = {
            "count": float(amps.size),
            "amp_mean": float(amps.mean()) if amps.size else 0.0,
            "amp_max": float(amps.max()) if amps.size else 0.0,
            "amp_sum": float(amps.sum()),
        }
    out = np.empty(len(registry))
    for i, (c, s) in enumerate(registry.descriptors):
        if c == "HRV":
            out[i] = hrv[s]
        elif c == "SCR":
            out[i] = scr[s]
        else:
            out[i] = STATISTICS[s](signals[c])
    return out


def extract_session(session: SessionRecord, registry: FeatureRegistry | None = None) -> tuple[list[FeatureWindow], dict]:
    """Labelled, valid feature windows of one session and a count summary."""
    registry = registry or default_registry()
    shells = window_session(session)
    processed = preprocess_session(session)
    rates = _rates(session)
    out, invalid, unlabeled = [], 0, 0
    for w in shells:
        if w.label is None:
            unlabeled += 1
            continue
        try:
            f = extract_window_features(window_signals(processed, rates, w.start_s), rates, registry)
        except DataError as exc:
            log.info("%s window at %.0f s invalid: %s", session.session_id, w.start_s, exc)
            invalid += 1
            continue
        out.append(replace(w, features=f))
    return out, {"windows": len(shells), "invalid": invalid, "unlabeled": unlabeled}


def change_score_normalize(windows: list[FeatureWindow], n_baseline: int = N_BASELINE) -> list[FeatureWindow]:
    """Subtract each subject's calm baseline and drop the baseline windows.

    The baseline is the per-feature mean of the subject's first ``n_baseline``
    calm windows, ordered by session id then start time.  Subjects with fewer
    calm windows are dropped with a warning.  Output keeps input order.
    """
    by_subject = defaultdict(list)
    for i, w in enumerate(windows):
        by_subject[w.subject_id].append(i)
    drop, baseline = set(), {}
    for sid, idx in by_subject.items():
        calm = sorted((i for i in idx if windows[i].label == 0), key=lambda i: (windows[i].session_id, windows[i].start_s))
        if len(calm) < n_baseline:
            warnings.warn(f"subject {sid} has {len(calm)} calm windows (< {n_baseline}); dropped", stacklevel=2)
            drop.update(idx)
            continue
        base = calm[:n_baseline]
        drop.update(base)
        baseline[sid] = np.mean([windows[i].features for i in base], axis=0)
    return [
        replace(w, features=w.features - baseline[w.subject_id]) for i, w in enumerate(windows) if i not in drop
    ]


def extract_dataset(
    sessions: list[SessionRecord],
    registry: FeatureRegistry | None = None,
    name: str = "",
    normalize: bool = True,
) -> FeatureDataset:
    """Windowed, optionally change-score normalised features of several sessions."""
    registry = registry or default_registry()
    windows, summary = [], {}
    for s in sessions:
        w, counts = extract_session(s, registry)
        windows += w
        summary[s.session_id] = counts
    if normalize:
        windows = change_score_normalize(windows)
    if not windows:
        raise DataError("no usable windows after extraction")
    return FeatureDataset(
        np.vstack([w.features for w in windows]),
        np.array([w.label for w in windows], dtype=np.int64),
        [w.subject_id for w in windows],
        [w.session_id for w in windows],
        np.array([w.start_s for w in windows]),
        registry.names,
        registry.hash,
        name,
        {"extraction": summary, "change_score": normalize, "n_features": len(registry)},
    )
