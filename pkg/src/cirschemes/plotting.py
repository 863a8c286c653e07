"""Matplotlib figures written next to the CSV/JSON outputs.

Only the non-interactive Agg backend is used; every function writes a file
and closes its figure.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_paths(t, values, path, labels=None, title=None, ylabel="y"):
    """Plot one or more trajectories; ``values`` is (n_paths, n_nodes) or (n_paths, n_nodes, n_coords)."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[..., None]
    n_coords = values.shape[2]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for c in range(n_coords):
            for i, row in enumerate(values[:, :, c]):
                label = None
                if i == 0:
                    label = labels[c] if labels else (f"{ylabel}{c + 1}" if n_coords > 1 else ylabel)
                ax.plot(t, row, lw=0.8, color=f"C{c}", alpha=0.8 if len(values) == 1 else 0.4, label=label)
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_difference(t, diff, path, title=None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for row in np.atleast_2d(diff):
            ax.plot(t, row, lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("difference")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_error_ladder(deltas, errors, std_errors, path, fitted_order=None, title=None, ylabel="strong L2 error"):
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    std_errors = np.asarray(std_errors, dtype=float)
    keep = errors > 0
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.errorbar(deltas[keep], errors[keep], yerr=2 * std_errors[keep], fmt="o-", capsize=3, label="measured")
        if fitted_order is not None and np.isfinite(fitted_order) and keep.any():
            d0, e0 = deltas[keep][0], errors[keep][0]
            ax.plot(deltas[keep], e0 * (deltas[keep] / d0) ** fitted_order, "--", label=f"slope {fitted_order:.3f}")
            ax.plot(deltas[keep], e0 * (deltas[keep] / d0) ** 0.5, ":", color="gray", label="slope 0.5")
        ax.set_xscale("log", base=2)
        ax.set_yscale("log", base=2)
        ax.set_xlabel("step size")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_sign_flips(deltas, fractions, fraction_se, weighted, weighted_se, path, title=None):
    with plt.rc_context(RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
        ax1.errorbar(deltas, fractions, yerr=2 * np.asarray(fraction_se), fmt="o-", capsize=3)
        ax1.set_ylabel("fraction of steps with z < 0")
        ax2.errorbar(deltas, weighted, yerr=2 * np.asarray(weighted_se), fmt="o-", capsize=3, color="C1")
        ax2.set_ylabel("mean of y (sgn z - 1)^2")
        for ax in (ax1, ax2):
            ax.set_xscale("log", base=2)
            ax.set_xlabel("step size")
        if title:
            fig.suptitle(title)
        return _save(fig, path)
