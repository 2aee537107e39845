"""Figure rendering for evaluation reports.

SVG output is made byte-deterministic: element ids are derived from a
fixed hash salt and the creation date metadata is suppressed, so repeated
runs with identical inputs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import direction_to_yaw_pitch

_HASHSALT = "ocumesh"


def _save(fig, path) -> None:
    with plt.rc_context({"svg.hashsalt": _HASHSALT}):
        fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)


def gaze_overlap_scatter(pred_gazes, gt_gazes, path) -> None:
    """Prediction/reference overlap in gaze yaw-pitch coordinates: the
    reference cloud as crosses, predictions as triangles."""
    gt_ang = np.array([direction_to_yaw_pitch(g) for g in gt_gazes])
    pred_ang = np.array([direction_to_yaw_pitch(g) for g in pred_gazes])
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ax.scatter(gt_ang[:, 0], gt_ang[:, 1], marker="x", s=18, c="tab:blue",
               label="reference", alpha=0.7, linewidths=0.8)
    ax.scatter(pred_ang[:, 0], pred_ang[:, 1], marker="^", s=14, c="tab:orange",
               label="prediction", alpha=0.7, edgecolors="none")
    ax.set_xlabel("gaze yaw (deg)")
    ax.set_ylabel("gaze pitch (deg)")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def history_curves(history, path) -> None:
    """Per-epoch loss terms and validation error from a training run."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    epochs = history.epochs
    for series, label in (
        (history.loss_gt, "gt loss"),
        (history.loss_pgt, "pseudo loss"),
        (history.loss_mv, "multi-view loss"),
    ):
        if any(v is not None for v in series):
            ax.plot(epochs, [np.nan if v is None else v for v in series], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.grid(True, alpha=0.3)
    if any(v is not None for v in history.val_error_deg):
        ax2 = ax.twinx()
        ax2.plot(epochs, [np.nan if v is None else v for v in history.val_error_deg],
                 color="tab:red", linestyle="--", label="val error (deg)")
        ax2.set_ylabel("validation error (deg)")
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)
