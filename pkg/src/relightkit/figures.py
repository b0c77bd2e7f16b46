"""Matplotlib renderings of report data, written straight to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_dilation_figure(report: dict, path) -> None:
    """Paired bars of boundary error, with and without dilation, per shape."""
    rows = report["shapes"]
    names = [r["name"] for r in rows]
    plain = [r["plain_error"] for r in rows]
    dilated = [r["dilated_error"] for r in rows]
    x = np.arange(len(rows))
    width = 0.4
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(rows)), 4.0))
    ax.bar(x - width / 2, plain, width, label="no dilation", color="#c44e52")
    ax.bar(x + width / 2, dilated, width, label="dilation + cutoff", color="#4c72b0")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=75, fontsize=7)
    ax.set_ylabel("boundary-band mean |error|")
    ax.set_title(
        f"Dilation radius {report['params']['radius']}: "
        f"median improvement {report['median_improvement']:.4f}"
    )
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_alignment_error_figure(pair, path) -> None:
    """Histogram of masked absolute error for an aligned image pair."""
    pred, gt = pair.masked()
    save_histogram_figure(np.abs(pred - gt), path,
                          "Masked absolute error after chromatic alignment",
                          "absolute error")


def save_histogram_figure(values, path, title: str, xlabel: str, bins: int = 50) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(np.asarray(values).ravel(), bins=bins, color="#4c72b0")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_nn_distance_figure(pred_to_gt, gt_to_pred, path, threshold: float) -> None:
    """Nearest-neighbor distance distributions in both directions."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(np.asarray(pred_to_gt), bins=50, alpha=0.6, label="pred to gt", color="#4c72b0")
    ax.hist(np.asarray(gt_to_pred), bins=50, alpha=0.6, label="gt to pred", color="#c44e52")
    ax.axvline(threshold, color="k", linestyle="--", linewidth=1, label=f"threshold {threshold:g}")
    ax.set_xlabel("nearest-neighbor distance (cube units)")
    ax.set_ylabel("count")
    ax.set_title("Point cloud nearest-neighbor distances")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
