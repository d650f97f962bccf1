"""Figure rendering for experiment and dynamics outputs.

Every CLI command that writes delimited output also renders a matching
PNG next to it (opt out with --no-plots). Rendering is headless and file
based; nothing here is interactive.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def save_metrics_figure(path, runs, title):
    """Accuracy curves per split with one line per seed plus the seed mean."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharex=True)
    for ax, split in zip(axes, ("train", "test")):
        series = []
        for run in runs:
            ys = [
                row.train_accuracy if split == "train" else row.test_accuracy
                for row in run.rows
            ]
            if any(np.isnan(ys)):
                continue
            xs = [row.epoch for row in run.rows]
            ax.plot(xs, ys, alpha=0.35, lw=1.0, color="tab:blue")
            series.append(ys)
        if series:
            ax.plot(
                xs, np.mean(series, axis=0), color="tab:blue", lw=2.0, label="seed mean"
            )
            ax.legend(loc="lower right", fontsize=8)
        ax.set_xlabel("epoch")
        ax.set_ylabel(f"{split} accuracy")
        ax.grid(alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trajectory_figure(path, trajectory, labels, title, product=None):
    """State components over time, with the composite map P when provided."""
    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    show = min(len(labels), 12)  # readable cap; big systems plot their norms
    if len(labels) <= 12:
        for i in range(show):
            ax.plot(trajectory.times, trajectory.states[:, i], lw=1.2, label=labels[i])
    else:
        norms = np.linalg.norm(trajectory.states, axis=1)
        ax.plot(trajectory.times, norms, lw=1.4, label="state norm")
    if product is not None:
        ax.plot(trajectory.times, product, "k--", lw=1.6, label="P")
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_field_figure(path, field, title):
    """Quiver plot colored by sign(dP/dt) with the two overlay curves."""
    fig, ax = plt.subplots(figsize=(6.5, 6))
    colors = np.where(field.dp_sign >= 0, "tab:green", "tab:red")
    ax.quiver(
        field.a1, field.a2, field.da1, field.da2,
        color=colors, angles="xy", width=0.0035, alpha=0.85,
    )
    if field.hyperbola.size:
        ax.plot(field.hyperbola[:, 0], field.hyperbola[:, 1], "b-", lw=1.5,
                label="critical hyperbola")
    if field.parabola.size:
        ax.plot(field.parabola[:, 0], field.parabola[:, 1], "k--", lw=1.2,
                label="stability parabola")
    lo1, hi1 = field.a1.min(), field.a1.max()
    lo2, hi2 = field.a2.min(), field.a2.max()
    ax.set_xlim(lo1, hi1)
    ax.set_ylim(lo2, hi2)
    ax.set_xlabel("a1")
    ax.set_ylabel("a2")
    ax.legend(fontsize=8, loc="upper right")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
