"""Figure rendering for selection and calibration artifacts.

All functions draw to files through the Agg backend, so they work headless.
Inputs are plain arrays; reading artifact files and deciding which figures
apply is the caller's job.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InvalidArgumentError

_COMPONENTS = ("z", "roll", "pitch")


def render_o1_curve(curve, path, k_star=None):
    """Observability index against prefix size, optional stop marker."""
    c = np.asarray(curve, dtype=float)
    if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] == 0:
        raise InvalidArgumentError("curve must be a non-empty (n, 2) array of (k, o1)")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(c[:, 0], c[:, 1], marker="o", markersize=3, lw=1.2)
    if k_star is not None:
        ax.axvline(int(k_star), color="tab:red", lw=1.0, ls="--")
        ax.annotate(
            f"k* = {int(k_star)}",
            xy=(int(k_star), float(c[:, 1].max())),
            xytext=(4, -2),
            textcoords="offset points",
            color="tab:red",
            fontsize=9,
        )
    ax.set_xlabel("postures in ranked prefix")
    ax.set_ylabel("observability index O1")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_weights(weights, path):
    """Optimized posture weights, ranked descending, log scale.

    The optimum is supported on a small subset; the log axis makes the
    support/off-support split visible.  Zero weights are dropped from the plot
    (their count is written into the title instead).
    """
    w = np.sort(np.asarray(weights, dtype=float))[::-1]
    if w.size == 0:
        raise InvalidArgumentError("weights must be non-empty")
    pos = w[w > 0.0]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(np.arange(1, pos.size + 1), pos, marker=".", lw=0.8)
    ax.set_xlabel("weight rank")
    ax.set_ylabel("weight")
    ax.set_title(f"{pos.size} nonzero of {w.size} weights")
    ax.grid(True, alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_residuals(posture_ids, before, after, path):
    """Per-posture contact residuals before and after calibration.

    One panel per component; distance and angles carry different units so a
    shared axis would hide the angular rows.
    """
    b = np.asarray(before, dtype=float).reshape(-1, 3)
    a = np.asarray(after, dtype=float).reshape(-1, 3)
    ids = np.asarray(posture_ids)
    if b.shape != a.shape or b.shape[0] != ids.shape[0]:
        raise InvalidArgumentError("posture_ids, before and after lengths disagree")
    fig, axes = plt.subplots(3, 1, figsize=(6.5, 7.0), sharex=True)
    units = ("m", "rad", "rad")
    for c, (ax, name, unit) in enumerate(zip(axes, _COMPONENTS, units)):
        ax.plot(ids, b[:, c], marker="o", markersize=3, lw=0.8, label="before")
        ax.plot(ids, a[:, c], marker="s", markersize=3, lw=0.8, label="after")
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.set_ylabel(f"{name} [{unit}]")
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="best", fontsize=9)
    axes[-1].set_xlabel("posture id")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_detmax_traces(traces, path):
    """Objective per exchange round for each restart of the exchange search."""
    if not traces:
        raise InvalidArgumentError("need at least one trace")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, tr in enumerate(traces):
        tr = np.asarray(tr, dtype=float)
        ax.plot(np.arange(tr.size), tr, lw=0.9, alpha=0.8, label=f"run {i + 1}")
    ax.set_xlabel("exchange round")
    ax.set_ylabel("observability index O1")
    if len(traces) <= 10:
        ax.legend(fontsize=7, ncol=2)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
