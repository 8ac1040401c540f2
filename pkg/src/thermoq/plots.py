"""Figure rendering for evaluation and sweep reports.

Every report CSV written by the command-line surface gets a PNG rendered next
to it, so a run directory is browsable without extra tooling.  The figures are
deliberately plain matplotlib; the CSV files stay the canonical numeric
record.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_distance_bands",
    "save_curve",
    "save_overlays",
    "save_pulse_grid",
]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_distance_bands(times, bands, path):
    """Mean trace-distance curve with the min/max envelope shaded."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.fill_between(times, bands.min, bands.max, alpha=0.25, color="tab:blue", lw=0, label="min/max")
    ax.plot(times, bands.mean, color="tab:blue", label="mean")
    ax.set_xlabel("t")
    ax.set_ylabel("trace distance")
    ax.legend()
    return _finish(fig, path)


def save_curve(times, values, path, ylabel):
    """A single named curve against time (positivity violation, cumulative distance, ...)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(times, values, color="tab:red")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    return _finish(fig, path)


def save_overlays(times, data, pred, labels, path):
    """Data-vs-prediction panels: one row per trajectory, one column per component.

    ``data`` and ``pred`` are (n_traj, n_times, dim) bundles; ``labels`` names
    the rows (record ids or control indices).
    """
    data = np.asarray(data)
    pred = np.asarray(pred)
    n, _, d = data.shape
    fig, axes = plt.subplots(n, d, figsize=(2.4 * d, 2.0 * n), squeeze=False, sharex=True)
    for i in range(n):
        for j in range(d):
            ax = axes[i][j]
            ax.plot(times, data[i, :, j], ".", ms=2.0, color="0.6", label="data")
            ax.plot(times, pred[i, :, j], color="tab:blue", lw=1.2, label="model")
            if i == 0:
                ax.set_title(f"$v_{{{j + 1}}}$", fontsize=10)
            if j == 0:
                ax.set_ylabel(str(labels[i]), fontsize=8)
    axes[0][0].legend(loc="best", fontsize=7)
    for ax in axes[-1]:
        ax.set_xlabel("t")
    return _finish(fig, path)


def save_pulse_grid(p_values, q_values, tables, path):
    """Heatmap panels over the (p, q) pulse-strength grid.

    ``tables`` maps a panel label to a (len(p_values), len(q_values)) array;
    missing cells may be NaN and render blank.
    """
    labels = list(tables)
    fig, axes = plt.subplots(1, len(labels), figsize=(3.6 * len(labels), 3.2), squeeze=False)
    for ax, label in zip(axes[0], labels):
        mesh = ax.pcolormesh(np.asarray(q_values), np.asarray(p_values), np.asarray(tables[label]), shading="nearest")
        fig.colorbar(mesh, ax=ax)
        ax.set_title(label, fontsize=10)
        ax.set_xlabel("q amplitude")
        ax.set_ylabel("p amplitude")
    return _finish(fig, path)
