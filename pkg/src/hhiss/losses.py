"""Scalar objectives and their gradients with respect to logits.

Every function returns ``(value, dvalue/dlogits)``.  The IRM penalty uses the
dummy-scalar-classifier form: the per-environment risk of ``w * logits`` is
differentiated with respect to ``w`` at ``w = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .net import softmax


@dataclass
class EnvironmentBatch:
    """Rows of one environment (one subject) inside a minibatch."""

    logits: np.ndarray
    labels: np.ndarray
    env_id: str = ""

    def __post_init__(self):
        self.logits = np.atleast_2d(np.asarray(self.logits, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.labels.size < 1:
            raise ConfigError("an environment batch needs at least one row")
        if self.labels.size != self.logits.shape[0]:
            raise ConfigError("labels and logits disagree on row count")
        if self.labels.min() < 0 or self.labels.max() >= self.logits.shape[1]:
            raise ConfigError("labels out of range for the number of classes")


@dataclass(frozen=True)
class LossWeights:
    beta: float = 0.3  # IRM penalty weight
    lam: float = 0.5  # continuous-label weight
    squared_penalty: bool = False

    def __post_init__(self):
        if self.beta < 0 or self.lam < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    total: float
    ce: float
    irm: float
    soft: float
    grad: np.ndarray


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite logits")


def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    _finite(logits)
    n, c = logits.shape
    if labels.size != n or labels.min() < 0 or labels.max() >= c:
        raise ConfigError("invalid labels for cross-entropy")
    rows = np.arange(n)
    loss = -_log_softmax(logits)[rows, labels].mean()
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def irm_scale_derivative(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """``d/dw mean CE(w * logits, labels)`` at ``w = 1`` and its gradient w.r.t. logits."""
    n = logits.shape[0]
    rows = np.arange(n)
    p = softmax(logits)
    pz = (p * logits).sum(axis=1)
    d = float((pz - logits[rows, labels]).mean())
    g = p * (1.0 + logits - pz[:, None])
    g[rows, labels] -= 1.0
    return d, g / n


def irm_penalty(env: EnvironmentBatch, squared: bool = False) -> tuple[float, np.ndarray]:
    """Norm of the risk gradient w.r.t. the dummy scale (``|d|``, or ``d**2`` when squared)."""
    _finite(env.logits)
    d, g = irm_scale_derivative(env.logits, env.labels)
    if squared:
        return d * d, 2.0 * d * g
    return abs(d), np.sign(d) * g


def soft_label_loss(student_logits: np.ndarray, teacher_logits: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy of the student against softmax of the raw teacher logits (no temperature)."""
    s = np.atleast_2d(np.asarray(student_logits, dtype=np.float64))
    t = np.atleast_2d(np.asarray(teacher_logits, dtype=np.float64))
    if s.shape != t.shape:
        raise ConfigError(f"student {s.shape} and teacher {t.shape} logits differ in shape")
    _finite(s, t)
    q = softmax(t)
    loss = -(q * _log_softmax(s)).sum(axis=1).mean()
    return float(loss), (softmax(s) - q) / s.shape[0]


def _penalty_sum(logits, labels, env_ids, squared):
    # all environments at once; equals summing irm_penalty over each env
    _, env, counts = np.unique(env_ids, return_inverse=True, return_counts=True)
    rows = np.arange(len(labels))
    p = softmax(logits)
    pz = (p * logits).sum(axis=1)
    d = np.bincount(env, weights=pz - logits[rows, labels]) / counts
    g = p * (1.0 + logits - pz[:, None])
    g[rows, labels] -= 1.0
    g /= counts[env][:, None]
    if squared:
        return float((d * d).sum()), 2.0 * d[env][:, None] * g
    return float(np.abs(d).sum()), np.sign(d)[env][:, None] * g


def combined_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    env_ids: np.ndarray,
    weights: LossWeights,
    teacher_logits: np.ndarray | None = None,
) -> LossBreakdown:
    """Pooled CE + beta * sum of per-environment penalties + lam * soft-label CE.

    ``env_ids`` assigns each row to an environment; the environments
    partition the batch.  The soft-label term is skipped when no teacher
    logits are given or ``lam == 0``.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    env_ids = np.asarray(env_ids).ravel()
    if env_ids.size != logits.shape[0]:
        raise ConfigError("env_ids must label every row")
    ce, grad = cross_entropy(logits, labels)
    irm = 0.0
    if weights.beta > 0.0:
        irm, g = _penalty_sum(logits, labels, env_ids, weights.squared_penalty)
        grad += weights.beta * g
    soft = 0.0
    if teacher_logits is not None and weights.lam > 0.0:
        teacher_logits = np.atleast_2d(teacher_logits)
        if teacher_logits.shape != logits.shape:
            raise ConfigError("teacher logits are not aligned with the batch rows")
        soft, g = soft_label_loss(logits, teacher_logits)
        grad += weights.lam * g
    total = ce + weights.beta * irm + weights.lam * soft
    return LossBreakdown(total, ce, irm, soft, grad)


def combined_loss_envs(
    envs: list[EnvironmentBatch],
    weights: LossWeights,
    teacher_logits: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray]]:
    """:func:`combined_loss` over an explicit list of environment batches.

    ``teacher_logits`` are aligned with the row-wise concatenation of the
    environments.  Returns the scalar and per-environment logit gradients.
    """
    if not envs:
        raise ConfigError("need at least one environment")
    logits = np.concatenate([e.logits for e in envs])
    labels = np.concatenate([e.labels for e in envs])
    ids = np.concatenate([np.full(len(e.labels), i) for i, e in enumerate(envs)])
    out = combined_loss(logits, labels, ids, weights, teacher_logits)
    bounds = np.cumsum([0] + [len(e.labels) for e in envs])
    return out.total, [out.grad[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
