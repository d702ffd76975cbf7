"""Figure rendering for replication studies and fitted mixtures.

Renders matplotlib figures to files next to the delimited output: one
panel per performance measure with sample size on the x-axis and one line
per estimator, plus CDF comparison plots for one-dimensional mixtures.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import mixture_cdf

__all__ = ["plot_metric_curves", "plot_cdf_comparison", "render_study_figures"]

_METRIC_LABELS = {
    "ll_gap": "scaled log-likelihood gap",
    "prob_mae": "MAE of choice probabilities",
    "cdf_dist": "L1 CDF distance",
    "pct_neg_err": "error in percent negative",
    "mean_err_norm": "norm of mean error",
}

_MODE_COLORS = {"GR": "tab:blue", "EM-GR": "tab:green", "EM": "black", "BE": "tab:red"}


def plot_metric_curves(agg_rows, case, metric, path):
    """One figure: metric mean versus sample size, one line per mode."""
    rows = [r for r in agg_rows
            if r["case"] == case and r.get(metric, "") not in ("", None)]
    if not rows:
        return False
    fig, ax = plt.subplots(figsize=(5, 3.5))
    modes = sorted({r["mode"] for r in rows})
    for mode in modes:
        pts = sorted((int(r["n"]), float(r[metric]))
                     for r in rows if r["mode"] == mode)
        ns, vals = zip(*pts)
        ax.plot(ns, vals, marker="o", label=mode,
                color=_MODE_COLORS.get(mode))
    ax.set_xlabel("sample size")
    ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
    ax.set_title(f"case {case}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def plot_cdf_comparison(mixing, truth, path, box=(-4.0, 4.0)):
    """Estimated versus true mixing CDF (one mixed coordinate only)."""
    if truth.dim != 1:
        raise ValueError("CDF comparison plots support one mixed coordinate")
    z = np.linspace(box[0], box[1], 801)[:, None]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(z[:, 0], truth.cdf(z), label="true", color="black")
    ax.plot(z[:, 0], mixture_cdf(mixing, z), label="estimated",
            color="tab:blue", linestyle="--")
    ax.set_xlabel(truth.labels[0])
    ax.set_ylabel("CDF")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_study_figures(agg_rows, out_dir):
    """Render all available metric curves; returns the written paths."""
    written = []
    cases = sorted({r["case"] for r in agg_rows})
    for case in cases:
        for metric in _METRIC_LABELS:
            path = os.path.join(out_dir, f"{metric}_case{case}.png")
            if plot_metric_curves(agg_rows, case, metric, path):
                written.append(path)
    return written
