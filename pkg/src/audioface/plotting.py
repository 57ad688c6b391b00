"""Report figures (matplotlib, Agg backend only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _level_x(levels):
    """Numeric x positions with 'clean' placed one step below the quietest level."""
    numeric = [float(v) for v in levels if v != "clean"]
    lo = min(numeric) - 10.0 if numeric else 0.0
    return [lo if v == "clean" else float(v) for v in levels]


def plot_noise_curves(curves: dict, path, metric="lmd"):
    """``curves`` maps a label to rows from ``facegen.evaluate_noise``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ticks = None
    for label, rows in curves.items():
        levels = [r["level_db"] for r in rows]
        x = _level_x(levels)
        order = np.argsort(x)
        ax.plot(np.array(x)[order], np.array([r[metric] for r in rows])[order], marker="o", label=label)
        ticks = (np.array(x)[order], [str(levels[i]) for i in order])
    if ticks is not None:
        ax.set_xticks(ticks[0])
        ax.set_xticklabels(ticks[1])
    ax.set_xlabel("noise level (dB)")
    ax.set_ylabel(metric.upper())
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_probe_table(table: dict, path, title="probe accuracy (%)"):
    reps = ["content", "emotion"]
    tasks = ["viseme", "emotion"]
    grid = np.array([[table[(r, t)] for t in tasks] for r in reps])
    fig, ax = plt.subplots(figsize=(3.8, 3.2))
    im = ax.imshow(grid, vmin=0, vmax=100, cmap="viridis")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center",
                    color="white" if grid[i, j] < 60 else "black")
    ax.set_xticks(range(2))
    ax.set_xticklabels([f"{t} task" for t in tasks])
    ax.set_yticks(range(2))
    ax.set_yticklabels([f"z ({r})" for r in reps])
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_frame_strip(frames, path, max_frames=12):
    frames = np.asarray(frames)[:max_frames]
    fig, axes = plt.subplots(1, len(frames), figsize=(1.2 * len(frames), 1.4))
    for ax, f in zip(np.atleast_1d(axes), frames):
        ax.imshow(f, cmap="gray", vmin=0, vmax=1)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
