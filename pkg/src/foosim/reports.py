"""Matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import math
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def training_figure(history: Sequence[Dict], out_png):
    """Success rate, mean reward and optimizer diagnostics per update."""
    updates = [r["update"] for r in history]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    ax = axes[0, 0]
    ax.plot(updates, [r.get("success_rate", math.nan) for r in history], color="tab:blue")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax = axes[0, 1]
    ax.plot(updates, [r["mean_reward"] for r in history], color="tab:orange")
    ax.set_ylabel("mean reward / step")
    ax = axes[1, 0]
    ax.plot(updates, [r["approx_kl"] for r in history], color="tab:green", label="approx KL")
    ax.plot(updates, [r["clip_fraction"] for r in history], color="tab:red", label="clip fraction")
    ax.legend()
    ax.set_xlabel("update")
    ax = axes[1, 1]
    ax.plot(updates, [r["lr"] for r in history], color="tab:purple")
    ax.set_yscale("log")
    ax.set_ylabel("learning rate")
    ax.set_xlabel("update")
    if any("win_rate" in r for r in history):
        axes[0, 0].plot(
            updates,
            [r.get("win_rate", math.nan) for r in history],
            color="tab:cyan",
            alpha=0.7,
            label="win rate",
        )
        axes[0, 0].legend(["success rate", "win rate"])
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def bench_figure(records: Sequence[Dict], summary: Dict, out_png):
    """Trajectory overlay and per-frame position error for the estimator
    benchmark."""
    frames = [r["frame"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    ax1.plot([r["truth_x"] for r in records], [r["truth_y"] for r in records],
             color="k", lw=1.5, label="truth")
    ax1.plot([r["est_x"] for r in records], [r["est_y"] for r in records],
             color="tab:blue", lw=1.0, label="filtered")
    ax1.scatter(
        [(r["meas_u"] - 640.0) / 1000.0 for r in records],
        [(360.0 - r["meas_v"]) / 1000.0 for r in records],
        s=4, color="tab:red", alpha=0.4, label="raw",
    )
    ax1.set_aspect("equal")
    ax1.legend()
    ax1.set_title("trajectory")
    err = [
        math.hypot(r["est_x"] - r["truth_x"], r["est_y"] - r["truth_y"])
        if not math.isnan(r["est_x"])
        else math.nan
        for r in records
    ]
    ax2.plot(frames, err, color="tab:blue", label="filtered |error|")
    ax2.axhline(summary["rmse_raw"], color="tab:red", ls="--", label="raw RMSE")
    ax2.axhline(summary["rmse_filtered"], color="tab:blue", ls="--", label="filtered RMSE")
    ax2.set_xlabel("frame")
    ax2.set_ylabel("position error [m]")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
