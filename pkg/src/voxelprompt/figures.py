"""Matplotlib rendering for benchmark reports and uncertainty maps."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import PHASES, TimingReport
from .uncertainty import uncertainty_to_heatmap


def save_latency_chart(reports: Sequence[TimingReport], path: str | Path) -> Path:
    """Grouped bar chart of mean wall time per backend and phase."""
    path = Path(path)
    backends = sorted({r.backend for r in reports})
    phases = [p for p in PHASES if any(r.phase == p for r in reports)]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / max(1, len(backends))
    x = np.arange(len(phases))
    for i, backend in enumerate(backends):
        means, errs = [], []
        for phase in phases:
            match = [r for r in reports if r.backend == backend and r.phase == phase]
            means.append(match[0].mean_s if match else 0.0)
            errs.append(match[0].std_s if match else 0.0)
        ax.bar(x + i * width, means, width, yerr=errs, capsize=3, label=backend)
    ax.set_xticks(x + width * (len(backends) - 1) / 2)
    ax.set_xticklabels(phases)
    ax.set_ylabel("wall time (s)")
    ax.set_title("Per-phase latency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_uncertainty_figure(
    uncertainty: np.ndarray,
    axis: int,
    index: int,
    path: str | Path,
    base_slice: np.ndarray | None = None,
) -> Path:
    """One uncertainty slice as a heatmap, lighter meaning more uncertain."""
    path = Path(path)
    heat = uncertainty_to_heatmap(uncertainty, axis, index)
    fig, ax = plt.subplots(figsize=(5, 5))
    if base_slice is not None:
        ax.imshow(base_slice.T, cmap="gray", origin="lower")
        ax.imshow(heat.T, cmap="inferno", origin="lower", alpha=0.6, vmin=0.0, vmax=1.0)
    else:
        ax.imshow(heat.T, cmap="inferno", origin="lower", vmin=0.0, vmax=1.0)
    ax.set_title(f"uncertainty, axis {axis} slice {index}")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
