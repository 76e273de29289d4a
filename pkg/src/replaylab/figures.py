"""Matplotlib report rendering (Agg backend; files only, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsLog  # noqa: E402

__all__ = ["accuracy_over_time_figure", "ablation_figure"]


def accuracy_over_time_figure(log: MetricsLog, path: str | Path,
                              title: str | None = None) -> None:
    """Validation accuracy after every batch; the review point marked separately."""
    train = [(r.index, r.val_acc) for r in log.records if r.phase == "train"]
    review = [(r.index, r.val_acc) for r in log.records if r.phase == "review"]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    if train:
        ax.plot([t for t, _ in train], [a for _, a in train], marker="o",
                markersize=3, label="after batch")
    if review:
        ax.scatter([t for t, _ in review], [a for _, a in review], marker="*",
                   s=80, color="tab:red", zorder=3, label="after review")
    if log.test_acc is not None:
        ax.axhline(log.test_acc, linestyle="--", linewidth=0.8, color="gray",
                   label=f"final test {log.test_acc:.3f}")
    ax.set_xlabel("stream batch")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0.0, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ablation_figure(rows, path: str | Path) -> None:
    """Grouped bars of avg/final validation accuracy with std error bars."""
    methods = [r.method for r in rows]
    x = range(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(rows)), 3.6))
    ax.bar([i - width / 2 for i in x], [r.avg_val_acc_mean for r in rows], width,
           yerr=[r.avg_val_acc_std for r in rows], capsize=3, label="avg_val_acc")
    ax.bar([i + width / 2 for i in x], [r.final_val_acc_mean for r in rows], width,
           yerr=[r.final_val_acc_std for r in rows], capsize=3, label="final_val_acc")
    ax.set_xticks(list(x))
    ax.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
