"""Report figures rendered to image files with the non-interactive backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_retention(traces, path, prune_fraction: float | None = None) -> Path:
    """Intersection retention and validation BA per round."""
    rounds = [t.round for t in traces]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(rounds, [t.retention for t in traces], marker="o", ms=3, label="intersection retention")
    ax.plot(rounds, [t.val_ba for t in traces], marker="s", ms=3, label="validation BA")
    if prune_fraction is not None:
        ax.axhline(1 - prune_fraction, color="grey", ls="--", lw=0.8, label="single-mask retention 1-K")
    ax.set_xlabel("round")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_scores(rows: dict[str, dict[str, float]], path, ylabel: str = "balanced accuracy") -> Path:
    """Grouped bars: one group per dataset tag, one bar per approach."""
    approaches = list(rows)
    tags = sorted({t for r in rows.values() for t in r})
    x = np.arange(len(tags))
    width = 0.8 / max(len(approaches), 1)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(tags) + 2), 3.5))
    for i, a in enumerate(approaches):
        ax.bar(x + i * width, [rows[a].get(t, np.nan) for t in tags], width, label=a)
    ax.set_xticks(x + width * (len(approaches) - 1) / 2, tags)
    ax.axhline(0.5, color="grey", ls=":", lw=0.8)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_saliency(saliency: np.ndarray, feature_names, path, top: int = 20) -> Path:
    """Heatmap of the ``top`` features by mean absolute input gradient."""
    s = np.asarray(saliency)
    order = np.argsort(-s.mean(axis=0), kind="stable")[:top]
    fig, ax = plt.subplots(figsize=(7, 0.25 * len(order) + 1.5))
    im = ax.imshow(s[:, order].T, aspect="auto", cmap="viridis", interpolation="nearest")
    ax.set_yticks(range(len(order)), [feature_names[i] for i in order], fontsize=7)
    ax.set_xlabel("window")
    fig.colorbar(im, ax=ax, label="|d logit / d input|")
    return _save(fig, path)


def plot_bench(per_seed: dict[str, list[float]], path, oracle: float | None = None) -> Path:
    """OOD balanced accuracy per seed for each method."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, (m, vals) in enumerate(per_seed.items()):
        ax.scatter(np.full(len(vals), i), vals, s=18)
        ax.hlines(np.mean(vals), i - 0.3, i + 0.3, color="k")
    ax.set_xticks(range(len(per_seed)), list(per_seed))
    if oracle is not None:
        ax.axhline(oracle, color="tab:red", ls="--", lw=0.8, label="Bayes oracle")
        ax.legend(fontsize=8)
    ax.set_ylabel("OOD balanced accuracy")
    return _save(fig, path)
