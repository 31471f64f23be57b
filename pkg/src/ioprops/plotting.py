"""Figures for CLI reports, rendered off-screen to PNG files.

Uses the object-oriented Agg API (no pyplot state) and strips the software
tag from PNG metadata so repeated runs give identical bytes.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "estimate": dict(color="#1f4e79", lw=1.4),
    "truth": dict(color="#b03a2e", lw=1.0, ls="--"),
}
LABELS = {"gain": "gain estimate", "passivity": "shortage of passivity", "cone": "cone radius"}


def _new(nrows=1, height=3.2):
    fig = Figure(figsize=(6.0, height * nrows), dpi=100)
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(nrows, 1, i + 1) for i in range(nrows)]
    for ax in axes:
        ax.grid(True, alpha=0.3, lw=0.5)
    return fig, axes


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})


def plot_trace(trace, path, quantity, truth=None, center_truth=None):
    """Estimate against cumulative samples; cone traces get a center panel."""
    samples = trace.column("samples")
    cone = trace.with_cone
    fig, axes = _new(2 if cone else 1)
    ax = axes[0]
    ax.plot(samples, trace.column("estimate"), label="estimate", **STYLE["estimate"])
    if truth is not None:
        ax.axhline(truth, label="truth", **STYLE["truth"])
    ax.set_ylabel(LABELS.get(quantity, quantity))
    ax.legend(loc="best", fontsize=8)
    if cone:
        ax2 = axes[1]
        ax2.plot(samples, trace.column("c"), label="center", **STYLE["estimate"])
        if center_truth is not None:
            ax2.axhline(center_truth, label="truth", **STYLE["truth"])
        ax2.set_ylabel("cone center")
        ax2.legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("samples")
    _save(fig, path)


def plot_compare(rows, path, quantity):
    """Relative error against budget, one line per method."""
    fig, (ax,) = _new()
    methods = list(dict.fromkeys(r["method"] for r in rows))
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        b = np.array([r["samples_used"] for r in sel], dtype=float)
        e = np.array([r["rel_error"] for r in sel], dtype=float)
        ax.plot(b, np.maximum(e, 1e-17), marker="o", ms=3, lw=1.2, label=m)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("samples used")
    ax.set_ylabel(f"relative error ({LABELS.get(quantity, quantity)})")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)
