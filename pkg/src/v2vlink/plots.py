"""Figure rendering for the report paths.

Training runs get a reward / valid-action curve pair; comparisons get
per-policy bars.  Figures are written next to the CSVs they summarize.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _rolling(x, window):
    if len(x) < window:
        return np.asarray(x, dtype=float)
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="valid")


def save_training_figure(metrics, path, title):
    """Per-episode cumulative reward and valid-action count."""
    episodes = [m.episode for m in metrics]
    rewards = [m.cum_reward for m in metrics]
    valid = [m.valid_actions for m in metrics]
    window = max(1, len(episodes) // 50)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(episodes, rewards, lw=0.6, alpha=0.4, color="tab:blue")
    smoothed = _rolling(rewards, window)
    ax1.plot(episodes[window - 1:], smoothed, lw=1.6, color="tab:blue",
             label=f"rolling mean ({window})")
    ax1.set_ylabel("cumulative reward")
    ax1.legend(loc="lower right")
    ax1.set_title(title)

    ax2.plot(episodes, valid, lw=0.6, alpha=0.4, color="tab:green")
    ax2.plot(episodes[window - 1:], _rolling(valid, window), lw=1.6,
             color="tab:green")
    ax2.set_ylabel("valid actions")
    ax2.set_xlabel("episode")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_comparison_figure(rows, path, title):
    """Cumulative reward and valid-action fraction per policy."""
    names = [r["policy"] for r in rows]
    rewards = [r["cum_reward"] for r in rows]
    valid = [r["valid_fraction"] for r in rows]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    pos = np.arange(len(names))
    ax1.bar(pos, rewards, color="tab:blue")
    ax1.set_xticks(pos, names, rotation=30, ha="right")
    ax1.set_ylabel("cumulative reward")
    ax1.set_title(title)
    ax2.bar(pos, valid, color="tab:green")
    ax2.set_xticks(pos, names, rotation=30, ha="right")
    ax2.set_ylabel("valid-action fraction")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
