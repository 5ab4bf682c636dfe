"""Figures written next to the CSV outputs.

Figures are built on bare :class:`~matplotlib.figure.Figure` objects so no
pyplot state or interactive backend is involved.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

CHANNEL_COLORS = ("tab:red", "tab:green", "tab:blue")
LINESTYLES = ("-", "--", ":", "-.")

# No Software/date stamps, so reruns give identical files.
_PNG_META = {"Software": None}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(labelsize=8)


def plot_histograms(hists: dict, path, title: str = "", normalize: bool = True) -> None:
    """One panel per channel, one line per labelled histogram.

    With ``normalize`` each histogram is divided by its pixel count so images of
    different size compare on the same axis.
    """
    fig = Figure(figsize=(9, 2.8))
    axes = fig.subplots(1, 3, sharey=True)
    for c, (ax, name) in enumerate(zip(axes, ("red", "green", "blue"))):
        for i, (label, hist) in enumerate(hists.items()):
            counts = hist.counts[c].astype(np.float64)
            if normalize and counts.sum() > 0:
                counts = counts / counts.sum()
            centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
            ax.plot(centers, counts, LINESTYLES[i % len(LINESTYLES)], color=CHANNEL_COLORS[c],
                    lw=1.0, label=label)
        ax.set_xlim(0, 1)
        ax.set_xlabel(f"{name} value", fontsize=9)
        _style(ax)
    axes[0].set_ylabel("fraction of pixels" if normalize else "count", fontsize=9)
    if len(hists) > 1:
        axes[-1].legend(fontsize=7, frameon=False)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)


def plot_difference_report(report, path, title: str = "") -> None:
    """Horizontal bars of the per-class difference, classes sorted by name."""
    classes = sorted(report.per_class)
    values = [report.per_class[c] for c in classes]
    fig = Figure(figsize=(5, 0.45 * len(classes) + 1.2))
    ax = fig.subplots()
    y = np.arange(len(classes))
    ax.barh(y, values, color="0.35", height=0.6)
    ax.set_yticks(y)
    ax.set_yticklabels(classes, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel(f"performance difference ({report.mode})", fontsize=9)
    ax.set_xlim(0, max(values + [1e-3]) * 1.15)
    _style(ax)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
