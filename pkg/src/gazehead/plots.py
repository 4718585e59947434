"""Comparison charts and trajectory plots for evaluation reports."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport
from .types import MotionSequence

_METRIC_COLUMNS = [
    ("angular_error_avg", "Angular error (avg), deg", True),
    ("angular_error_best", "Angular error (best), deg", True),
    ("correlation_pitch_best", "Correlation pitch (best)", False),
    ("correlation_yaw_best", "Correlation yaw (best)", False),
    ("ave_avg", "AVE (avg), deg^2", True),
    ("smoothness_avg", "Smoothness (avg), deg/frame^3", True),
    ("apd", "APD, deg", False),
]


def plot_metric_comparisons(reports: list[EvalReport], out_dir) -> list[str]:
    """One bar chart per metric across methods, plus the table as CSV."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    methods = [r.method for r in reports]
    table_path = os.path.join(out_dir, "metric_comparison.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + methods)
        for column, _, _ in _METRIC_COLUMNS:
            writer.writerow([column] + [getattr(r, column) for r in reports])
    written.append(table_path)
    for column, label, lower_better in _METRIC_COLUMNS:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        values = [getattr(r, column) for r in reports]
        ax.bar(methods, values, color="#4878a8")
        ax.set_ylabel(label)
        ax.set_title(f"{label} ({'lower' if lower_better else 'higher'} is better)")
        ax.tick_params(axis="x", rotation=20)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{column}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_trajectories(
    input_id: str,
    gaze: MotionSequence | None,
    real_head: MotionSequence | None,
    samples: list[MotionSequence],
    out_dir,
    max_samples: int = 5,
) -> list[str]:
    """Pitch and yaw vs frame for a few samples, with gaze/real overlays."""
    os.makedirs(out_dir, exist_ok=True)
    safe_id = input_id.replace("/", "_").replace("#", "_")
    shown = samples[:max_samples]
    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    rows = {}
    for ax, dim, dim_name in ((axes[0], 0, "pitch"), (axes[1], 1, "yaw")):
        for j, sample in enumerate(shown):
            values = np.degrees(sample.angles[:, dim])
            rows[f"sample{j}_{dim_name}"] = values
            ax.plot(values, color="#4878a8", alpha=0.6, lw=1.0,
                    label="generated" if j == 0 else None)
        if real_head is not None:
            values = np.degrees(real_head.angles[:, dim])
            rows[f"real_{dim_name}"] = values
            ax.plot(values, color="#222222", lw=1.6, label="real head")
        if gaze is not None:
            values = np.degrees(gaze.angles[:, dim])
            rows[f"gaze_{dim_name}"] = values
            ax.plot(values, color="#b04a4a", lw=1.2, ls="--", label="gaze")
        ax.set_ylabel(f"{dim_name} (deg)")
        ax.legend(loc="upper right", fontsize=8)
    axes[1].set_xlabel("frame")
    fig.suptitle(f"trajectories: {input_id}")
    fig.tight_layout()
    png_path = os.path.join(out_dir, f"trajectory_{safe_id}.png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)

    csv_path = os.path.join(out_dir, f"trajectory_{safe_id}.csv")
    names = sorted(rows)
    length = max(len(v) for v in rows.values())
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + names)
        for t in range(length):
            writer.writerow([t] + [rows[n][t] if t < len(rows[n]) else "" for n in names])
    return [png_path, csv_path]
