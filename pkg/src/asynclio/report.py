"""Report rendering for a finished run: figures plus a delimited summary.

Reads the artifacts a run directory holds (est.tum, frames.json,
metrics.json) and produces PNG figures alongside a per-frame summary CSV.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluate import load_tum
from .pipeline import STAGES


def render_report(run_dir, out_dir=None, truth_path=None) -> list[Path]:
    """Render trajectory, stage-timing, and weight figures plus summary.csv."""
    run = Path(run_dir)
    out = Path(out_dir) if out_dir else run / "report"
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    times, rots, pos = load_tum(run / "est.tum")
    with open(run / "frames.json") as f:
        frames = json.load(f)
    metrics = {}
    if (run / "metrics.json").exists():
        with open(run / "metrics.json") as f:
            metrics = json.load(f)

    # Top-down trajectory.
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(pos[:, 0], pos[:, 1], "b-", lw=1.2, label="estimate")
    if truth_path and Path(truth_path).exists():
        _, _, p_t = load_tum(truth_path)
        ax.plot(p_t[:, 0], p_t[:, 1], "k--", lw=0.9, label="truth")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    title = "trajectory (top-down)"
    if "ATE_t" in metrics:
        title += f"  ATE_t={metrics['ATE_t']:.3f} m"
    ax.set_title(title)
    fig.tight_layout()
    path = out / "trajectory_xy.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    # Stage timing.
    means = [np.mean([f["stages"][s] for f in frames]) * 1e3 for s in STAGES]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(STAGES)), means, color="steelblue")
    ax.set_xticks(range(len(STAGES)))
    ax.set_xticklabels(STAGES, rotation=20, ha="right")
    ax.set_ylabel("mean time per frame [ms]")
    ax.set_title("stage timing")
    fig.tight_layout()
    path = out / "timing_stages.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    # Localization weight trace.
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot([f["t"] for f in frames], [f["w_l"] for f in frames], "g.-", ms=3)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("localization weight")
    ax.set_title("measurement confidence per frame")
    fig.tight_layout()
    path = out / "localization_weight.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    # Delimited per-frame summary.
    path = out / "summary.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["t", "x", "y", "z", "w_l", "n_points", "n_residuals", "iterations"]
            + [f"stage_{s.replace(' ', '_').lower()}_ms" for s in STAGES]
        )
        pos_by_t = {round(t, 9): p for t, p in zip(times, pos)}
        for fr in frames:
            p = pos_by_t.get(round(fr["t"], 9), (np.nan, np.nan, np.nan))
            writer.writerow(
                [fr["t"], p[0], p[1], p[2], fr["w_l"], fr["n_points"],
                 fr["n_residuals"], fr["iterations"]]
                + [fr["stages"][s] * 1e3 for s in STAGES]
            )
    written.append(path)
    return written
