"""Evaluation metrics, saliency and the results-table export."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .net import NetworkParams, backward, forward


def _check(labels, predictions, n_classes):
    y = np.asarray(labels, dtype=np.int64).ravel()
    p = np.asarray(predictions, dtype=np.int64).ravel()
    if y.size == 0 or y.size != p.size:
        raise DataError("labels and predictions must be non-empty and of equal length")
    n_classes = n_classes or int(max(y.max(), p.max())) + 1
    missing = [c for c in range(n_classes) if not np.any(y == c)]
    if missing:
        raise DataError(f"classes {missing} have no examples; balanced metrics are undefined")
    return y, p, n_classes


def confusion(labels, predictions, n_classes: int | None = None) -> np.ndarray:
    """Counts ``C[true, predicted]``."""
    y, p, c = _check(labels, predictions, n_classes)
    out = np.zeros((c, c), dtype=np.int64)
    np.add.at(out, (y, p), 1)
    return out


def per_class_recall(labels, predictions, n_classes=None) -> np.ndarray:
    cm = confusion(labels, predictions, n_classes)
    return np.diag(cm) / cm.sum(axis=1)


def per_class_f1(labels, predictions, n_classes=None) -> np.ndarray:
    # F1 = 2TP / (2TP + FP + FN); a class with no predictions and no support scores 0
    cm = confusion(labels, predictions, n_classes)
    tp = np.diag(cm).astype(float)
    denom = 2 * tp + (cm.sum(axis=0) - tp) + (cm.sum(axis=1) - tp)
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def balanced_accuracy(labels, predictions, n_classes=None) -> float:
    """Unweighted mean of per-class recalls."""
    return float(per_class_recall(labels, predictions, n_classes).mean())


def macro_f1(labels, predictions, n_classes=None) -> float:
    return float(per_class_f1(labels, predictions, n_classes).mean())


@dataclass
class MetricsReport:
    tag: str
    balanced_accuracy: float
    macro_f1: float
    recalls: list[float] = field(default_factory=list)
    f1s: list[float] = field(default_factory=list)
    confusion: list[list[int]] = field(default_factory=list)
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(labels, predictions, tag: str = "", n_classes: int = 2) -> MetricsReport:
    cm = confusion(labels, predictions, n_classes)
    return MetricsReport(
        tag=tag,
        balanced_accuracy=balanced_accuracy(labels, predictions, n_classes),
        macro_f1=macro_f1(labels, predictions, n_classes),
        recalls=per_class_recall(labels, predictions, n_classes).tolist(),
        f1s=per_class_f1(labels, predictions, n_classes).tolist(),
        confusion=cm.tolist(),
        n=int(cm.sum()),
    )


def ood_mean(reports, ood_tags) -> float:
    """Mean balanced accuracy over the reports whose tag is listed in ``ood_tags``.

    ``reports`` may be a mapping tag -> MetricsReport/float or a list of reports.
    """
    if isinstance(reports, dict):
        items = reports.items()
    else:
        items = [(r.tag, r) for r in reports]
    tags = set(ood_tags)
    if not tags:
        raise ConfigError("no OOD tags given")
    vals = [getattr(r, "balanced_accuracy", r) for t, r in items if t in tags]
    if not vals:
        raise ConfigError(f"none of the tags {sorted(tags)} are present")
    return float(np.mean(vals))


def saliency_map(params: NetworkParams, x: np.ndarray, normalize: bool = False) -> np.ndarray:
    """``|d logit[predicted class] / d input|`` per row and feature.

    With ``normalize`` each row is divided by its maximum (rows of all zeros
    are left as zeros).
    """
    logits, cache = forward(params, x, training=False)
    pred = logits.argmax(axis=1)
    upstream = np.zeros_like(logits)
    upstream[np.arange(len(pred)), pred] = 1.0
    sal = np.abs(backward(params, cache, upstream, input_grad=True).inputs)
    if not np.all(np.isfinite(sal)):
        raise NumericalError("non-finite saliency")
    if normalize:
        top = sal.max(axis=1, keepdims=True)
        sal = np.divide(sal, top, out=np.zeros_like(sal), where=top > 0)
    return sal


def format_table(rows: dict[str, dict[str, MetricsReport]], ood_tags=(), sep: str = "\t") -> str:
    """Results table: one row per approach, Accuracy/Macro F1 per dataset, then OOD Mean.

    ``rows`` maps approach name -> {dataset tag -> report}.  Dataset columns
    follow the insertion order of the first approach.
    """
    if not rows:
        return ""
    datasets = list(next(iter(rows.values())).keys())
    head = ["Approach"]
    for d in datasets:
        head += [f"{d} Accuracy", f"{d} Macro F1"]
    if ood_tags:
        head.append("OOD Mean")
    lines = [sep.join(head)]
    for name, reports in rows.items():
        cells = [name]
        for d in datasets:
            r = reports.get(d)
            cells += ["" if r is None else f"{r.balanced_accuracy:.4f}", "" if r is None else f"{r.macro_f1:.4f}"]
        if ood_tags:
            cells.append(f"{ood_mean(reports, ood_tags):.4f}")
        lines.append(sep.join(cells))
    return "\n".join(lines) + "\n"
