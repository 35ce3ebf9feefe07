"""Importance scoring, retention masks and mask intersection.

Only weight matrices are scored and pruned; biases are never masked.  The
``J`` weights of a network are ranked globally in flat order (layer by
layer, row-major) unless per-layer ranking is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .losses import LossWeights, combined_loss
from .net import GradientSet, NetworkParams, backward, forward


@dataclass
class PruneMask:
    layers: list[np.ndarray]  # bool, one per weight matrix

    @classmethod
    def ones_like(cls, params: NetworkParams) -> "PruneMask":
        return cls([np.ones(w.shape, dtype=bool) for w in params.weights])

    @classmethod
    def from_flat(cls, flat: np.ndarray, shapes) -> "PruneMask":
        flat = np.asarray(flat, dtype=bool)
        out, start = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            out.append(flat[start : start + size].reshape(shape))
            start += size
        if start != flat.size:
            raise ConfigError("flat mask length does not match layer shapes")
        return cls(out)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [m.shape for m in self.layers]

    def flat(self) -> np.ndarray:
        return np.concatenate([m.ravel() for m in self.layers])

    @property
    def size(self) -> int:
        return sum(m.size for m in self.layers)

    @property
    def retained(self) -> int:
        return int(sum(m.sum() for m in self.layers))

    @property
    def retention_fraction(self) -> float:
        return self.retained / self.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PruneMask) or self.shapes != other.shapes:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))

    def issubset(self, other: "PruneMask") -> bool:
        return all(not np.any(a & ~b) for a, b in zip(self.layers, other.layers))


def importance_scores(params: NetworkParams, grads: GradientSet) -> list[np.ndarray]:
    """``|dL/dtheta| * |theta|`` for every weight."""
    scores = []
    for w, g in zip(params.weights, grads.weights):
        if w.shape != g.shape:
            raise ConfigError("gradient and weight shapes differ")
        s = np.abs(g) * np.abs(w)
        if not np.all(np.isfinite(s)):
            raise NumericalError("non-finite importance scores")
        scores.append(s)
    return scores


def n_pruned(k: float, j: int) -> int:
    """``ceil(k * j)``, tolerant of float round-off (``0.8 * 15`` is 12, not 13)."""
    return min(j, math.ceil(k * j - 1e-9))


def _prune_lowest(flat_scores: np.ndarray, k: float) -> np.ndarray:
    keep = np.ones(flat_scores.size, dtype=bool)
    # stable sort: among equal scores the lower flat index is pruned first
    order = np.argsort(flat_scores, kind="stable")
    keep[order[: n_pruned(k, flat_scores.size)]] = False
    return keep


def retention_mask(scores, prune_fraction: float, per_layer: bool = False) -> PruneMask:
    """Mask out the ``ceil(K * J)`` lowest-scoring weights.

    ``scores`` is a list of per-layer arrays (or a single flat array).
    """
    if not 0.0 <= prune_fraction < 1.0:
        raise ConfigError(f"prune fraction must lie in [0, 1), got {prune_fraction}")
    if isinstance(scores, np.ndarray):
        scores = [scores]
    scores = [np.asarray(s, dtype=np.float64) for s in scores]
    if not all(np.all(np.isfinite(s)) for s in scores):
        raise NumericalError("non-finite scores")
    shapes = [s.shape for s in scores]
    if per_layer:
        return PruneMask([_prune_lowest(s.ravel(), prune_fraction).reshape(s.shape) for s in scores])
    flat = np.concatenate([s.ravel() for s in scores])
    return PruneMask.from_flat(_prune_lowest(flat, prune_fraction), shapes)


def intersect_masks(masks: list[PruneMask]) -> PruneMask:
    if not masks:
        raise ConfigError("cannot intersect an empty list of masks")
    shapes = masks[0].shapes
    if any(m.shapes != shapes for m in masks):
        raise ConfigError("mask shapes differ")
    return PruneMask([np.logical_and.reduce([m.layers[i] for m in masks]) for i in range(len(shapes))])


def loss_gradients(
    params: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    env_ids: np.ndarray,
    weights: LossWeights,
    teacher_logits: np.ndarray | None = None,
) -> GradientSet:
    """Single eval-mode pass of the combined loss over all given rows."""
    logits, cache = forward(params, x, training=False)
    out = combined_loss(logits, y, env_ids, weights, teacher_logits)
    if not np.isfinite(out.total):
        raise NumericalError("non-finite loss while scoring importance")
    return backward(params, cache, out.grad)


def subject_mask(
    params: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    prune_fraction: float,
    weights: LossWeights,
    teacher_logits: np.ndarray | None = None,
    per_layer: bool = False,
) -> PruneMask:
    """Retention mask from one subject's rows (treated as a single environment)."""
    if len(y) == 0:
        raise DataError("subject has no rows")
    grads = loss_gradients(params, x, y, np.zeros(len(y), dtype=np.int64), weights, teacher_logits)
    return retention_mask(importance_scores(params, grads), prune_fraction, per_layer)


def subject_masks(
    params: NetworkParams,
    x: np.ndarray,
    y: np.ndarray,
    subjects: np.ndarray,
    prune_fraction: float,
    weights: LossWeights,
    teacher_logits: np.ndarray | None = None,
    per_layer: bool = False,
) -> dict[str, PruneMask]:
    """One retention mask per subject, keyed by subject id in sorted order."""
    subjects = np.asarray(subjects).astype(str)
    out = {}
    for sid in sorted(np.unique(subjects)):
        idx = np.flatnonzero(subjects == sid)
        t = None if teacher_logits is None else teacher_logits[idx]
        out[sid] = subject_mask(params, x[idx], y[idx], prune_fraction, weights, t, per_layer)
    return out


def format_mask(mask: PruneMask, prune_fraction: float) -> str:
    """Diffable text export: a header, then one line of 0/1 characters per layer."""
    lines = [f"# J={mask.size} K={prune_fraction:g} retention={mask.retention_fraction:.6f}"]
    for i, m in enumerate(mask.layers):
        lines.append(f"# layer {i} shape={m.shape[0]}x{m.shape[1]}")
        lines.append("".join("1" if b else "0" for b in m.ravel()))
    return "\n".join(lines) + "\n"


def parse_mask(text: str) -> PruneMask:
    shapes, bits = [], []
    for line in text.splitlines():
        if line.startswith("# layer"):
            dims = line.split("shape=")[1]
            shapes.append(tuple(int(v) for v in dims.split("x")))
        elif line and not line.startswith("#"):
            bits.append(np.frombuffer(line.strip().encode(), dtype=np.uint8) == ord("1"))
    if len(shapes) != len(bits):
        raise DataError("mask text is malformed")
    return PruneMask([b.reshape(s) for b, s in zip(bits, shapes)])
