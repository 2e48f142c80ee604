"""Matplotlib rendering for the experiment report path.

Writes a regret figure (per-player mean with a stddev band across seeds)
and a pull-count heatmap (one panel per player, per-panel normalized)
alongside the CSV outputs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_regret_png(
    path: Path, cumulative_by_seed: Sequence[np.ndarray], log_x: bool = False
) -> None:
    """cumulative_by_seed: one (n_players, horizon) array per seed."""
    stacked = np.stack(cumulative_by_seed)  # (seeds, players, horizon)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    n_players, horizon = mean.shape
    rounds = np.arange(1, horizon + 1)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for i in range(n_players):
        (line,) = ax.plot(rounds, mean[i], label=f"player {i}")
        ax.fill_between(
            rounds, mean[i] - std[i], mean[i] + std[i],
            color=line.get_color(), alpha=0.2, linewidth=0,
        )
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative stable regret")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_heatmap_png(path: Path, counts: np.ndarray) -> None:
    """counts: (n_bins, n_players, n_arms) proposal counts."""
    n_bins, n_players, n_arms = counts.shape
    fig, axes = plt.subplots(
        n_players, 1, figsize=(8, 1.8 * n_players), squeeze=False, sharex=True
    )
    for i in range(n_players):
        ax = axes[i, 0]
        panel = counts[:, i, :].T.astype(float)  # arms on y, bins on x
        peak = panel.max()
        if peak > 0:
            panel = panel / peak
        ax.imshow(panel, aspect="auto", origin="lower", cmap="viridis",
                  interpolation="nearest")
        ax.set_ylabel(f"player {i}\narm")
        ax.set_yticks(range(n_arms))
    axes[-1, 0].set_xlabel("bin")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
