"""Matplotlib figures written next to the tabular reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import LIGHT_TYPES  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    # fixed metadata keeps repeated renders byte-identical
    "svg.hashsalt": "vlcorner",
}
LIGHT_COLORS = {"FL": "#1f77b4", "FR": "#ff7f0e", "RL": "#2ca02c", "RR": "#d62728"}
PNG_META = {"Software": None}


def figsize(width=4.5, ratio=None):
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def save(fig, path):
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def plot_loss_curves(traces: dict, path) -> None:
    """Per-epoch mean training loss for each trained light model."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for lt in LIGHT_TYPES:
            trace = traces.get(lt.value)
            if trace:
                ax.plot(np.arange(1, len(trace) + 1), trace, marker="o", ms=2.5,
                        label=lt.value, color=LIGHT_COLORS[lt.value])
        ax.set_xlabel("epoch")
        ax.set_ylabel("masked corner loss")
        ax.legend(frameon=False)
        fig.tight_layout()
        save(fig, path)


def plot_ade_bars(report: dict, path) -> None:
    """Per-light ADE on the clean and frozen-noise test sets."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        names = [lt.value for lt in LIGHT_TYPES] + ["weighted"]
        x = np.arange(len(names))
        for k, (split, hatch) in enumerate((("clean", None), ("noisy", "//"))):
            part = report[split]
            vals = [(part["per_light"][n] or {}).get("ade") for n in names[:-1]]
            vals.append(part["weighted"]["ade"])
            vals = [np.nan if v is None else v for v in vals]
            ax.bar(x + (k - 0.5) * 0.38, vals, width=0.38, label=split,
                   color="#8da0cb" if k == 0 else "#fc8d62", hatch=hatch)
        ax.set_xticks(x, names)
        ax.set_ylabel("ADE (px)")
        ax.legend(frameon=False)
        fig.tight_layout()
        save(fig, path)
