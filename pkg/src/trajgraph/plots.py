"""Figure rendering for the report paths (saved to files, never shown)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_metrics_figure(report, baseline, path):
    """Bar chart of the aggregate metrics next to the CSV/JSON report."""
    agg = report.aggregate()
    base = baseline.aggregate() if baseline is not None else {}
    ks = report.ks
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, metric, unit in zip(axes, ("minADE", "minFDE", "MR"), ("m", "m", "")):
        values = [agg.get(f"{metric}_{k}", np.nan) for k in ks]
        ax.bar([str(k) for k in ks], values, color="#4878d0")
        if metric != "MR" and base:
            ax.axhline(base.get(f"{metric}_1", np.nan), color="#d65f5f", ls="--",
                       label="constant velocity")
            ax.legend(fontsize=8)
        ax.set_xlabel("K")
        ax.set_ylabel(f"{metric} [{unit}]" if unit else metric)
        ax.set_title(metric)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_error_histogram(report, path):
    fdes = [s.min_fde[min(report.ks)] for s in report.scenes]
    if not fdes:
        return
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(fdes, bins=24, color="#4878d0", edgecolor="white")
    ax.axvline(2.0, color="#d65f5f", ls="--", label="miss threshold")
    ax.set_xlabel(f"minFDE_{min(report.ks)} [m]")
    ax.set_ylabel("scenes")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_scene_figure(sample, prediction, path, selected=None, anchors=None):
    """Top-down scene: lane geometry, anchors, candidates, GT future."""
    fig, ax = plt.subplots(figsize=(6.5, 6))
    prep = sample.prep
    for chain in prep.slice_chains:
        ax.plot(chain[:, 1], chain[:, 2], color="0.75", lw=4, solid_capstyle="round",
                zorder=1)
    for chain in prep.pose_chains:
        ax.plot(chain[:, 0], chain[:, 1], color="0.85", lw=4, ls=":", zorder=1)
    if anchors:
        for a in anchors:
            ax.plot(a.polyline[:, 0], a.polyline[:, 1], color="#e8a33d", lw=1.2,
                    alpha=0.9, zorder=2, label="_anchor")
    mu = prediction.mu
    sel = set(selected if selected is not None else range(len(mu)))
    for i in range(len(mu)):
        if i in sel:
            ax.plot(mu[i, :, 0], mu[i, :, 1], color="#d65f5f", lw=1.6, alpha=0.95, zorder=4)
        else:
            ax.plot(mu[i, :, 0], mu[i, :, 1], color="#d65f5f", lw=0.7, alpha=0.25, zorder=3)
    gt = sample.gt_future
    ax.plot(np.concatenate([[0.0], gt[:, 0]]), np.concatenate([[0.0], gt[:, 1]]),
            color="#2ca02c", lw=2.2, zorder=5, label="ground truth")
    ax.plot(0, 0, marker="o", color="k", ms=6, zorder=6)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"scene {sample.scene_id}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_training_curves(logs, path):
    if not logs:
        return
    keys = [k for k in logs[0].losses if k != "total"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    epochs = [l.epoch for l in logs]
    ax1.plot(epochs, [l.losses["total"] for l in logs], color="k", lw=1.6)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("total loss")
    for k in keys:
        ax2.plot(epochs, [l.losses[k] for l in logs], lw=1.2, label=k)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("component loss")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
