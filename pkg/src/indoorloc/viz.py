"""Static PNG rendering of training curves and evaluation artifacts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .training import MetricLog


def plot_metric_log(log: MetricLog, path: str | Path, title: str = ""):
    """Step losses on the left, eval-time metrics on the right."""
    step_keys = sorted({k for r in log.steps for k in r} - {"step"})
    eval_keys = sorted({k for r in log.evals for k in r} - {"step", "epoch"})
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    xs = [r["step"] for r in log.steps]
    for key in step_keys:
        axes[0].plot(xs, [r.get(key) for r in log.steps], label=key, linewidth=0.8)
    axes[0].set_xlabel("step")
    axes[0].set_title("training")
    axes[0].legend(fontsize=8)
    exs = [r.get("step", i) for i, r in enumerate(log.evals)]
    for key in eval_keys:
        axes[1].plot(exs, [r.get(key) for r in log.evals], marker="o", label=key)
    axes[1].set_xlabel("step")
    axes[1].set_title("validation")
    axes[1].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_confusion_matrix(counts: np.ndarray, path: str | Path, title: str = "scene confusion"):
    s = counts.shape[0]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(counts, cmap="Blues")
    for i in range(s):
        for j in range(s):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=9)
    ax.set_xlabel("predicted scene")
    ax.set_ylabel("true scene")
    ax.set_xticks(range(s))
    ax.set_yticks(range(s))
    ax.set_title(title)
    fig.colorbar(im, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_error_table(table: dict, path: str | Path):
    """Bar chart of per-axis position MAE and quaternion error, both modes."""
    keys = ["x_mae_m", "y_mae_m", "z_mae_m", "quat_mae"]
    labels = ["X (m)", "Y (m)", "Z (m)", "quaternion"]
    modes = [m for m in ("end_to_end", "oracle") if m in table]
    x = np.arange(len(keys))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, mode in enumerate(modes):
        vals = [table[mode][k] for k in keys]
        ax.bar(x + (i - (len(modes) - 1) / 2) * width, vals, width, label=mode)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("mean absolute error")
    ax.set_title("test-set regression error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
