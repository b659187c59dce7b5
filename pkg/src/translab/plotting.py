"""Matplotlib rendering of tail tables."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_tails(rows, curves, path, title=""):
    """Semilog plot of the ``curves`` columns of ``rows`` against x."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for col, label in curves:
        pts = [(float(r["x"]), float(r[col])) for r in rows if r.get(col) is not None]
        pts = [(x, v) for x, v in pts if math.isfinite(v) and v > 0]
        if pts:
            ax.semilogy(*zip(*pts), marker=".", label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("tail probability")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
