"""Report figures, rendered headlessly to image files."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .calibration import CalibrationReport, SampleOutcome


def save_reliability_diagram(report: CalibrationReport, path: str) -> None:
    """Per-bin accuracy against mean stated confidence.

    Bars show how far each occupied bin sits from the diagonal; the gap
    between the two is what the ECE aggregates.
    """
    occupied = [b for b in report.bins if b.count > 0]
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot([0, 1], [0, 1], linestyle="--", color="0.6", linewidth=1.0,
            label="perfect calibration")
    if occupied:
        width = occupied[0].hi - occupied[0].lo
        centers = [(b.lo + b.hi) / 2 for b in occupied]
        accuracies = [b.accuracy for b in occupied]
        ax.bar(centers, accuracies, width=width * 0.9, color="tab:blue",
               alpha=0.6, edgecolor="black", linewidth=0.5, label="bin accuracy")
        ax.plot([b.mean_confidence for b in occupied], accuracies,
                "o", color="tab:red", markersize=4, label="mean confidence")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("stated confidence")
    ax.set_ylabel("accuracy")
    title = "Reliability"
    if report.ece is not None:
        title += f" (ECE = {report.ece:.3f}, n = {report.n - report.n_excluded})"
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_entropy_histogram(samples: Sequence[SampleOutcome], path: str,
                           bins: int = 30) -> None:
    """Distribution of per-sample sentence entropy (the maximum token
    entropy inside each reasoning span)."""
    values = np.asarray([s.sentence_entropy for s in samples], dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if values.size:
        ax.hist(values, bins=bins, color="tab:blue", alpha=0.8,
                edgecolor="black", linewidth=0.5)
        ax.axvline(float(values.mean()), color="tab:red", linestyle="--",
                   linewidth=1.0, label=f"mean = {values.mean():.3f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("sentence entropy (nats)")
    ax.set_ylabel("traces")
    ax.set_title("Reasoning-span entropy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report_figures(report: CalibrationReport,
                          samples: Sequence[SampleOutcome],
                          out_dir: str) -> list[str]:
    """Write both report figures into ``out_dir``; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    reliability = os.path.join(out_dir, "reliability.png")
    save_reliability_diagram(report, reliability)
    histogram = os.path.join(out_dir, "entropy_hist.png")
    save_entropy_histogram(samples, histogram)
    return [reliability, histogram]
