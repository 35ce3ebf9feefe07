"""Raw multi-channel wearable recordings: container, file I/O and a simulator.

On disk a session is a directory holding ``session.json`` (subject id,
session id, channel rates, task annotations) and one ``<CHANNEL>.csv`` per
channel with a ``timestamp_s,value`` header.  Samples missing from the
uniform grid, or written as ``nan``, are gaps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError

CHANNEL_RATES = {
    "EDA": 4.0,
    "BVP": 64.0,
    "TEMP": 4.0,
    "ACC_X": 32.0,
    "ACC_Y": 32.0,
    "ACC_Z": 32.0,
    "HR": 1.0,
}
LABELS = {"calm": 0, "stress": 1}
WINDOW_S = 30.0
SESSION_FILE = "session.json"


@dataclass(frozen=True)
class Annotation:
    start_s: float
    end_s: float
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"annotation label must be one of {sorted(LABELS)}, got {self.label!r}")
        if not self.end_s > self.start_s:
            raise DataError(f"annotation interval [{self.start_s}, {self.end_s}) is empty")


@dataclass
class SessionRecord:
    subject_id: str
    session_id: str
    channels: dict[str, np.ndarray]
    rates: dict[str, float]
    annotations: list[Annotation] = field(default_factory=list)

    def __post_init__(self):
        if not self.subject_id or not self.session_id:
            raise DataError("session and subject ids must be non-empty")
        missing = [c for c in CHANNEL_RATES if c not in self.channels]
        if missing:
            raise DataError(f"session {self.session_id} lacks channels {missing}")
        for c in self.channels:
            if self.rates.get(c, 0) <= 0:
                raise DataError(f"channel {c} needs a positive sample rate")
            self.channels[c] = np.asarray(self.channels[c], dtype=np.float64)
        d = self.durations()
        if max(d.values()) - min(d.values()) > WINDOW_S:
            raise DataError(f"session {self.session_id}: channel durations disagree by more than one window: {d}")

    def durations(self) -> dict[str, float]:
        return {c: len(x) / self.rates[c] for c, x in self.channels.items()}

    @property
    def duration(self) -> float:
        return min(self.durations().values())

    def label_at(self, t: float) -> int | None:
        for a in self.annotations:
            if a.start_s <= t < a.end_s:
                return LABELS[a.label]
        return None


def write_session(session: SessionRecord, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "subject_id": session.subject_id,
        "session_id": session.session_id,
        "rates": {c: session.rates[c] for c in sorted(session.channels)},
        "annotations": [{"start_s": a.start_s, "end_s": a.end_s, "label": a.label} for a in session.annotations],
    }
    (d / SESSION_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for c in sorted(session.channels):
        x = session.channels[c]
        t = np.arange(len(x)) / session.rates[c]
        keep = np.isfinite(x)
        np.savetxt(d / f"{c}.csv", np.column_stack([t[keep], x[keep]]), delimiter=",", header="timestamp_s,value", comments="", fmt="%.17g")
    return d


def _read_channel(path: Path, rate: float) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if a.shape[0] == 0:
        raise DataError(f"{path}: no samples")
    if a.shape[1] != 2:
        raise DataError(f"{path}: expected columns timestamp_s,value")
    idx = np.rint(a[:, 0] * rate).astype(np.int64)
    if idx.min() < 0:
        raise DataError(f"{path}: negative timestamps")
    out = np.full(idx.max() + 1, np.nan)
    out[idx] = a[:, 1]
    return out


def load_session(directory) -> SessionRecord:
    d = Path(directory)
    try:
        meta = json.loads((d / SESSION_FILE).read_text())
        rates = {c: float(r) for c, r in meta["rates"].items()}
        annotations = [Annotation(float(a["start_s"]), float(a["end_s"]), a["label"]) for a in meta.get("annotations", [])]
        subject, session = str(meta["subject_id"]), str(meta["session_id"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{d / SESSION_FILE}: {exc}") from None
    channels = {c: _read_channel(d / f"{c}.csv", r) for c, r in rates.items()}
    return SessionRecord(subject, session, channels, rates, annotations)


def find_sessions(raw_dir) -> list[Path]:
    """Session directories below ``raw_dir`` in sorted order."""
    return sorted(p.parent for p in Path(raw_dir).rglob(SESSION_FILE))


def simulate_session(
    subject_id: str = "S01",
    session_id: str = "S01-a",
    duration_s: float = 600.0,
    stress_onset_s: float | None = 300.0,
    seed: int = 0,
) -> SessionRecord:
    """A plausible synthetic recording for fixtures and smoke runs.

    Heart rate and skin-conductance response frequency rise after
    ``stress_onset_s``; everything before it is annotated calm.
    """
    rng = np.random.default_rng(seed)
    onset = duration_s if stress_onset_s is None else stress_onset_s

    # beat times from an instantaneous heart rate that steps up under stress
    beats, t = [], 0.0
    while t < duration_s + 2:
        hr = 68.0 + (20.0 if t >= onset else 0.0) + 3.0 * rng.standard_normal()
        t += 60.0 / hr
        beats.append(t)
    beats = np.asarray(beats)

    n = int(round(duration_s * CHANNEL_RATES["BVP"]))
    tb = np.arange(n) / CHANNEL_RATES["BVP"]
    bvp = np.zeros(n)
    for b in beats:
        lo, hi = np.searchsorted(tb, [b - 0.4, b + 0.4])
        bvp[lo:hi] += np.exp(-0.5 * ((tb[lo:hi] - b) / 0.08) ** 2)
    bvp = 50.0 * bvp + rng.normal(0, 1.0, n)

    n = int(round(duration_s * CHANNEL_RATES["EDA"]))
    te = np.arange(n) / CHANNEL_RATES["EDA"]
    eda = 2.0 + 0.001 * te + 0.05 * np.sin(2 * np.pi * te / 240.0)
    scr_rate = np.where(te >= onset, 1 / 20.0, 1 / 60.0)
    for s in te[rng.random(n) < scr_rate / CHANNEL_RATES["EDA"]]:
        m = te >= s
        eda[m] += rng.uniform(0.1, 0.4) * (np.exp(-(te[m] - s) / 4.0) - np.exp(-(te[m] - s) / 0.75))
    eda += rng.normal(0, 0.005, n)

    temp = 33.0 - 0.2 * (te >= onset) + 0.05 * np.sin(2 * np.pi * te / 300.0) + rng.normal(0, 0.01, n)

    n = int(round(duration_s * CHANNEL_RATES["ACC_X"]))
    acc = rng.normal(0, 2.0, (3, n)) + np.array([[0.0], [0.0], [64.0]])

    th = np.arange(int(round(duration_s * CHANNEL_RATES["HR"])))
    ibi = np.diff(beats)
    hr = 60.0 / np.interp(th, beats[1:], ibi)

    annotations = []
    if onset > 0:
        annotations.append(Annotation(0.0, float(min(onset, duration_s)), "calm"))
    if onset < duration_s:
        annotations.append(Annotation(float(onset), float(duration_s), "stress"))
    return SessionRecord(
        subject_id,
        session_id,
        {"EDA": eda, "BVP": bvp, "TEMP": temp, "ACC_X": acc[0], "ACC_Y": acc[1], "ACC_Z": acc[2], "HR": hr},
        dict(CHANNEL_RATES),
        annotations,
    )


def window_count(duration_s: float, window_s: float = WINDOW_S, hop_s: float = 15.0) -> int:
    """``floor((duration - window) / hop) + 1`` for durations of at least one window."""
    if duration_s < window_s:
        return 0
    return int(math.floor((duration_s - window_s) / hop_s + 1e-9)) + 1
