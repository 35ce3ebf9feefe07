"""Raw wearable signals to windowed statistical feature vectors."""

from .eda import decompose_eda, detect_scr_events
from .filters import preprocess_bvp, preprocess_eda
from .hrv import HRV_NAMES, detect_bvp_peaks, hrv_metrics
from .pipeline import (
    FeatureWindow,
    change_score_normalize,
    extract_dataset,
    extract_session,
    extract_window_features,
    preprocess_session,
    window_session,
)
from .registry import FeatureRegistry, default_registry
from .session import SessionRecord, find_sessions, load_session, simulate_session, window_count, write_session

__all__ = [
    "FeatureRegistry",
    "FeatureWindow",
    "HRV_NAMES",
    "SessionRecord",
    "change_score_normalize",
    "decompose_eda",
    "default_registry",
    "detect_bvp_peaks",
    "detect_scr_events",
    "extract_dataset",
    "extract_session",
    "extract_window_features",
    "find_sessions",
    "hrv_metrics",
    "load_session",
    "preprocess_bvp",
    "preprocess_eda",
    "preprocess_session",
    "simulate_session",
    "window_count",
    "window_session",
    "write_session",
]
