"""Ordered feature descriptors and their layout hash."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..errors import ConfigError
from .hrv import HRV_NAMES
from .stats import STATISTICS

SIGNAL_CHANNELS = (
    "EDA",
    "BVP",
    "TEMP",
    "ACC_X",
    "ACC_Y",
    "ACC_Z",
    "HR",
    "ACC_L2",
    "EDA_tonic",
    "EDA_phasic",
)
SCR_NAMES = ("count", "amp_mean", "amp_max", "amp_sum")


@dataclass(frozen=True)
class FeatureRegistry:
    """Ordered ``(channel, statistic)`` descriptors.

    ``channel`` is a signal channel scored with a window statistic, ``"HRV"``
    for heart-rate-variability metrics or ``"SCR"`` for skin conductance
    response summaries.
    """

    descriptors: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "descriptors", tuple((str(c), str(s)) for c, s in self.descriptors))
        names = self.names
        if len(set(names)) != len(names):
            raise ConfigError("feature descriptor names must be unique")
        for c, s in self.descriptors:
            ok = (
                (c == "HRV" and s in HRV_NAMES)
                or (c == "SCR" and s in SCR_NAMES)
                or (c in SIGNAL_CHANNELS and s in STATISTICS)
            )
            if not ok:
                raise ConfigError(f"unknown feature descriptor {c}_{s}")

    @property
    def names(self) -> list[str]:
        return [f"{c}_{s}" for c, s in self.descriptors]

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]

    @property
    def channels(self) -> set[str]:
        return {c for c, _ in self.descriptors}


def default_registry() -> FeatureRegistry:
    """10 signal channels x 32 statistics, 16 HRV metrics and 4 SCR summaries: 340 features."""
    desc = [(c, s) for c in SIGNAL_CHANNELS for s in STATISTICS]
    desc += [("HRV", h) for h in HRV_NAMES]
    desc += [("SCR", s) for s in SCR_NAMES]
    return FeatureRegistry(tuple(desc))
