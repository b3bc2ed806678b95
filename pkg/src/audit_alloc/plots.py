"""Render report figures to files next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path) -> None:
    fig.savefig(Path(path), dpi=DPI, bbox_inches="tight")
    plt.close(fig)


def render_rate_curves(path, model_rates, oracle_rates, label: str = "model") -> None:
    """Audit rate by income bucket: model in black, oracle dashed red."""
    buckets = np.arange(1, len(model_rates) + 1)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    my = [np.nan if r is None else r for r in model_rates]
    oy = [np.nan if r is None else r for r in oracle_rates]
    ax.plot(buckets, my, color="black", marker="o", markersize=3.5, label=label)
    ax.plot(buckets, oy, color="tab:red", linestyle="--", marker="s", markersize=3, label="oracle")
    ax.set_xlabel("income bucket")
    ax.set_ylabel("audit rate")
    ax.set_xticks(buckets)
    ax.legend(frameon=False)
    ax.spines[["top", "right"]].set_visible(False)
    _save(fig, path)


def render_disparity(path, report) -> None:
    """Weighted selection rate, TPR, and FPR bars by income bucket."""
    buckets = np.asarray(report.buckets)
    width = 0.27
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for offset, (series, name, color) in enumerate([
        (report.selection_rate_w, "selection", "tab:blue"),
        (report.tpr_w, "tpr", "tab:green"),
        (report.fpr_w, "fpr", "tab:orange"),
    ]):
        ys = [np.nan if r is None else r for r in series]
        ax.bar(buckets + (offset - 1) * width, ys, width=width, label=name, color=color)
    ax.set_xlabel("income bucket")
    ax.set_ylabel("weighted rate")
    ax.set_xticks(buckets)
    ax.legend(frameon=False)
    ax.spines[["top", "right"]].set_visible(False)
    _save(fig, path)


def render_metric_bars(path, labels, values, ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 3.6))
    ax.bar(range(len(labels)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    ax.spines[["top", "right"]].set_visible(False)
    _save(fig, path)
