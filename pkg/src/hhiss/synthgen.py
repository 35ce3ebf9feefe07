"""Seeded multi-subject generator with a closed-form Bayes oracle.

Each window has a fair-coin label ``y`` and sign ``s = 2y - 1``.  Features
are, before a per-subject scale factor is applied:

* invariant dims: ``s * invariant_signal_strength + N(0, 1)``, the same for
  every subject;
* spurious dims: ``s * sign_e * a_e + N(0, 1)`` where ``a_e`` is drawn per
  subject from ``spurious_strength_range`` and ``sign_e`` is -1 with
  probability ``spurious_flip_probability`` for training subjects.  With
  probability ``spurious_absent_probability`` a training subject carries no
  spurious cue at all and its spurious dims are exactly zero, so the cue is
  useless for that subject.  OOD subjects always carry the cue, with the sign
  set by ``ood_flip_mode``;
* noise dims: ``N(0, 1)``.

The spurious and noise dims of subject ``e`` are multiplied by ``scale_e``
drawn from ``subject_scale_range``, which makes per-subject gradient
magnitudes on those inputs heterogeneous.  Invariant dims are never scaled,
so the Bayes accuracy of the invariant-only rule is
``Phi(strength * sqrt(d_invariant))`` for every subject.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .data import FeatureDataset
from .errors import ConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 32
    windows_per_subject: int = 40
    n_ood_subjects: int = 14
    ood_windows_per_subject: int = 40
    d_invariant: int = 10
    d_spurious: int = 10
    d_noise: int = 320
    invariant_signal_strength: float = 0.35
    spurious_strength_range: tuple[float, float] = (0.0, 1.5)
    spurious_flip_probability: float = 0.1
    spurious_absent_probability: float = 0.3
    ood_flip_mode: str = "flip"  # flip | same | random
    subject_scale_range: tuple[float, float] = (0.05, 2.0)
    seed: int = 0

    def __post_init__(self):
        if min(self.d_invariant, self.d_spurious, self.d_noise) < 0 or self.width < 1:
            raise ConfigError("feature dimensions must be non-negative with a positive total")
        if self.n_subjects < 1 or self.windows_per_subject < 1:
            raise ConfigError("need at least one subject and one window")
        if self.n_ood_subjects < 0 or self.ood_windows_per_subject < 1:
            raise ConfigError("invalid OOD subject configuration")
        lo, hi = self.spurious_strength_range
        if self.invariant_signal_strength < 0 or lo < 0 or hi < lo:
            raise ConfigError("signal strengths must be non-negative with lo <= hi")
        slo, shi = self.subject_scale_range
        if slo <= 0 or shi < slo:
            raise ConfigError("subject scales must be positive with lo <= hi")
        if not 0.0 <= self.spurious_flip_probability <= 1.0:
            raise ConfigError("flip probability must lie in [0, 1]")
        if not 0.0 <= self.spurious_absent_probability < 1.0:
            raise ConfigError("absent probability must lie in [0, 1)")
        if self.ood_flip_mode not in ("flip", "same", "random"):
            raise ConfigError(f"unknown ood_flip_mode {self.ood_flip_mode!r}")

    @property
    def width(self) -> int:
        return self.d_invariant + self.d_spurious + self.d_noise

    def feature_names(self) -> list[str]:
        return (
            [f"inv_{i}" for i in range(self.d_invariant)]
            + [f"spur_{i}" for i in range(self.d_spurious)]
            + [f"noise_{i}" for i in range(self.d_noise)]
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @property
    def registry_hash(self) -> str:
        # the seed does not change the feature layout, so it is left out of the hash
        layout = {k: v for k, v in self.to_dict().items() if k != "seed"}
        return "synthetic:" + hashlib.sha256(json.dumps(layout, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        for k in ("spurious_strength_range", "subject_scale_range"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        return cls(**d)


@dataclass
class _Subject:
    sid: str
    spurious: np.ndarray = field(repr=False)
    scale: float = 1.0
    absent: bool = False


def _draw_subjects(spec: SyntheticSpec, rng, n: int, prefix: str, mode: str) -> list[_Subject]:
    lo, hi = spec.spurious_strength_range
    slo, shi = spec.subject_scale_range
    out = []
    for i in range(n):
        a = rng.uniform(lo, hi)
        if mode == "train":
            sign = -1.0 if rng.random() < spec.spurious_flip_probability else 1.0
        elif mode == "flip":
            sign = -1.0
        elif mode == "same":
            sign = 1.0
        else:
            sign = -1.0 if rng.random() < 0.5 else 1.0
        scale = rng.uniform(slo, shi)
        absent = mode == "train" and rng.random() < spec.spurious_absent_probability
        out.append(_Subject(f"{prefix}{i:03d}", np.full(spec.d_spurious, sign * a), scale, absent))
    return out


def _sample(spec: SyntheticSpec, rng, subjects: list[_Subject], n_windows: int, name: str) -> FeatureDataset:
    rows, labels, sids, sessions, starts = [], [], [], [], []
    for subj in subjects:
        y = (rng.random(n_windows) < 0.5).astype(np.int64)
        s = (2.0 * y - 1.0)[:, None]
        inv = s * spec.invariant_signal_strength + rng.standard_normal((n_windows, spec.d_invariant))
        spur = s * subj.spurious[None, :] + rng.standard_normal((n_windows, spec.d_spurious))
        if subj.absent:
            spur[:] = 0.0
        noise = rng.standard_normal((n_windows, spec.d_noise))
        rows.append(np.hstack([inv, subj.scale * spur, subj.scale * noise]))
        labels.append(y)
        sids += [subj.sid] * n_windows
        sessions += [f"{subj.sid}-s0"] * n_windows
        starts.append(15.0 * np.arange(n_windows))
    return FeatureDataset(
        np.vstack(rows),
        np.concatenate(labels),
        sids,
        sessions,
        np.concatenate(starts),
        spec.feature_names(),
        spec.registry_hash,
        name,
        {"synthetic_spec": spec.to_dict(), "bayes_oracle_accuracy": bayes_oracle_accuracy(spec)},
    )


def generate_domains(spec: SyntheticSpec) -> tuple[FeatureDataset, FeatureDataset]:
    """Return ``(train, ood)`` datasets; subject ids ``train-*`` and ``ood-*``."""
    rng = np.random.default_rng(spec.seed)
    train_subj = _draw_subjects(spec, rng, spec.n_subjects, "train-", "train")
    ood_subj = _draw_subjects(spec, rng, spec.n_ood_subjects, "ood-", spec.ood_flip_mode)
    train = _sample(spec, rng, train_subj, spec.windows_per_subject, "synthetic-train")
    ood = _sample(spec, rng, ood_subj, spec.ood_windows_per_subject, "synthetic-ood")
    return train, ood


def bayes_oracle_accuracy(spec: SyntheticSpec) -> float:
    """Balanced accuracy of the likelihood-ratio rule on the invariant dims alone."""
    return float(norm.cdf(spec.invariant_signal_strength * np.sqrt(spec.d_invariant)))


def oracle_predict(spec: SyntheticSpec, X: np.ndarray) -> np.ndarray:
    """The invariant-only likelihood-ratio rule: sign of the summed invariant dims."""
    return (X[:, : spec.d_invariant].sum(axis=1) > 0).astype(np.int64)
