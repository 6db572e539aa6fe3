"""Matplotlib rendering for the report path.

Figures are written to files next to the CSV output: sample-complexity
curves (IQM line with a CI band per configuration) and final-policy
performance charts (IQM point with CI error bars).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import AggregateStat

FIG_SIZE = (7.0, 4.2)
DPI = 150


def plot_sample_complexity(
    curves: dict[str, tuple[np.ndarray, list[AggregateStat]]],
    metric_label: str,
    path: str | Path,
) -> Path:
    """One metric, all configurations: IQM lines with shaded 95% CI bands."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for name, (timesteps, stats) in sorted(curves.items()):
        iqm = np.array([s.iqm for s in stats])
        lo = np.array([s.ci_low for s in stats])
        hi = np.array([s.ci_high for s in stats])
        line, = ax.plot(timesteps, iqm, label=name, linewidth=1.4)
        ax.fill_between(timesteps, lo, hi, alpha=0.2, color=line.get_color(), linewidth=0)
    ax.set_xlabel("environment timesteps")
    ax.set_ylabel(metric_label)
    ax.set_title(f"Sample complexity: {metric_label}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_final_performance(
    stats: dict[str, AggregateStat], metric_label: str, path: str | Path
) -> Path:
    """One metric, all configurations: IQM with 95% CI error bars."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    names = list(stats)
    x = np.arange(len(names))
    iqm = np.array([stats[n].iqm for n in names])
    err_lo = iqm - np.array([stats[n].ci_low for n in names])
    err_hi = np.array([stats[n].ci_high for n in names]) - iqm
    ax.errorbar(x, iqm, yerr=[err_lo, err_hi], fmt="o", capsize=4)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(metric_label)
    ax.set_title(f"Final policy performance: {metric_label}")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
