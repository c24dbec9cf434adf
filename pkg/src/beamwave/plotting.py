"""Figures written next to the CSV reports (PNG/PDF/SVG by file suffix).

Figures are built with ``matplotlib.figure.Figure`` directly so nothing
depends on pyplot state or an interactive backend.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_beam_patterns(patterns: dict, path, floor_db: float = -40.0) -> None:
    """Overlay (angle, dB) patterns keyed by beam id, normalized to the overall peak."""
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    peak = max(float(np.max(p[:, 1])) for p in patterns.values())
    for beam_id, p in patterns.items():
        ax.plot(p[:, 0], np.maximum(p[:, 1] - peak, floor_db), lw=1, label=str(beam_id))
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("relative power (dB)")
    ax.set_ylim(floor_db, 1)
    ax.grid(alpha=0.3)
    if len(patterns) <= 12:
        ax.legend(title="beam", fontsize=7, ncol=2)
    _save(fig, path)


def plot_latency(rows, path) -> None:
    """Grouped bars from latency_table rows (T_SS ms, series, milliseconds)."""
    periods = sorted({r[0] for r in rows})
    series = list(OrderedDict.fromkeys(r[1] for r in rows))
    value = {(r[0], r[1]): float(r[2]) for r in rows}
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    width = 0.8 / len(series)
    x = np.arange(len(periods))
    for i, s in enumerate(series):
        ax.bar(x + (i - (len(series) - 1) / 2) * width, [value[(p, s)] for p in periods], width, label=s)
    ax.set_xticks(x, [f"{p:g}" for p in periods])
    ax.set_xlabel("SS burst period (ms)")
    ax.set_ylabel("beam selection latency (ms)")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def plot_confusion(cm: np.ndarray, path, title: str | None = None) -> None:
    """Heatmap of a row-normalized confusion matrix."""
    cm = np.asarray(cm, dtype=np.float64)
    n = cm.shape[0]
    fig = Figure(figsize=(1.5 + 0.45 * n, 1.2 + 0.42 * n))
    ax = fig.add_subplot()
    im = ax.imshow(cm, vmin=0, vmax=1, cmap="viridis")
    if n <= 12:
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{cm[i, j]:.2f}", ha="center", va="center", fontsize=6,
                        color="black" if cm[i, j] > 0.5 else "white")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def plot_training(log, path) -> None:
    """Loss and accuracy per epoch for every split in a TrainLog."""
    fig = Figure(figsize=(8, 3.5))
    ax_loss, ax_acc = fig.subplots(1, 2)
    for split in sorted({r[1] for r in log.rows}):
        epochs = [r[0] for r in log.rows if r[1] == split]
        ax_loss.plot(epochs, log.series(split, "loss"), marker=".", label=split)
        ax_acc.plot(epochs, log.series(split, "accuracy"), marker=".", label=split)
    ax_loss.set_ylabel("cross-entropy")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0, 1)
    for ax in (ax_loss, ax_acc):
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_activations(maps: dict, path) -> None:
    """Per-filter mean first-layer activation, one bar group per class."""
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    labels = list(maps)
    nf = len(next(iter(maps.values())))
    width = 0.8 / len(labels)
    x = np.arange(nf)
    for i, k in enumerate(labels):
        ax.bar(x + (i - (len(labels) - 1) / 2) * width, maps[k], width, label=f"beam {k}")
    ax.set_xlabel("filter")
    ax.set_ylabel("mean activation")
    ax.legend(fontsize=7)
    _save(fig, path)
