"""Static result figures: word-count histogram, label distribution bars,
confusion-matrix heatmap. Always written to files (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import ConfusionMatrix

_CLASS_LABELS = ["real", "fake"]


def _save(fig, path: str | Path) -> None:
    # empty metadata keeps PNG bytes identical across reruns
    fig.savefig(Path(path), dpi=150, metadata={"Software": None})
    plt.close(fig)


def save_word_count_histogram(word_counts, path: str | Path) -> None:
    """Distribution of words per post."""
    counts = np.asarray(list(word_counts))
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = min(50, max(int(counts.max()) - int(counts.min()) + 1, 1))
    ax.hist(counts, bins=bins, color="#4878cf", edgecolor="black", linewidth=0.3)
    ax.set_xlabel("words per post")
    ax.set_ylabel("posts")
    ax.set_title("Distribution of words per post")
    fig.tight_layout()
    _save(fig, path)


def save_label_distribution(split_label_counts: dict[str, dict[int, int]], path: str | Path) -> None:
    """Grouped bars: real/fake counts per split."""
    splits = list(split_label_counts)
    x = np.arange(len(splits))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    for offset, label in ((-width / 2, 0), (width / 2, 1)):
        values = [split_label_counts[s].get(label, 0) for s in splits]
        ax.bar(x + offset, values, width, label=_CLASS_LABELS[label])
    ax.set_xticks(x)
    ax.set_xticklabels(splits)
    ax.set_ylabel("posts")
    ax.set_title("Label distribution per split")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_confusion_heatmap(cm: ConfusionMatrix, path: str | Path, model_name: str = "") -> None:
    """2x2 heatmap with per-cell counts."""
    arr = cm.as_array()
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(arr, cmap="Blues")
    for g in (0, 1):
        for p in (0, 1):
            color = "white" if arr[g, p] > arr.max() / 2 else "black"
            ax.text(p, g, str(arr[g, p]), ha="center", va="center", color=color)
    ax.set_xticks([0, 1])
    ax.set_yticks([0, 1])
    ax.set_xticklabels(_CLASS_LABELS)
    ax.set_yticklabels(_CLASS_LABELS)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    title = "Confusion matrix" + (f" ({model_name})" if model_name else "")
    ax.set_title(title)
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    _save(fig, path)
