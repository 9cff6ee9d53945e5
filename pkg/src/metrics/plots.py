# Static figures: training curves, per-class metric bars and label overlays
import json
import logging
import os
from typing import Any, Dict, List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.utils.errors import GeometryError
from src.volume.core import LabelVolume, Volume3D

logger = logging.getLogger(__name__)

LOSS_KEYS = ("dice_loss", "bce_loss", "coarse_loss", "total")
BAR_METRICS = ("dice", "jaccard", "precision", "recall")
OVERLAY_COLOURS = {
    "truth": (0.0, 0.8, 0.0, 0.6),
    "prediction": (0.9, 0.0, 0.0, 0.6),
    "both": (1.0, 0.85, 0.0, 0.7),
}


def read_train_log(path: str) -> List[Dict[str, Any]]:
    """Read a JSON-lines training log, skipping blank lines."""
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _save(fig, out_path: str) -> str:
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    logger.info(f"Wrote {out_path}")
    return out_path


def plot_training_curves(records: List[Dict[str, Any]], out_path: str) -> str:
    if not records:
        raise ValueError("training log is empty")
    epochs = [r["epoch"] for r in records]
    fig, (loss_ax, dice_ax) = plt.subplots(1, 2, figsize=(10, 4))
    for key in LOSS_KEYS:
        loss_ax.plot(epochs, [r[key] for r in records], label=key)
    loss_ax.set_xlabel("epoch")
    loss_ax.set_ylabel("loss")
    loss_ax.legend()
    dice_ax.plot(epochs, [r.get("val_dice") for r in records], marker="o", color="tab:green")
    dice_ax.set_xlabel("epoch")
    dice_ax.set_ylabel("validation mean Dice")
    dice_ax.set_ylim(0, 1)
    return _save(fig, out_path)


def plot_class_metrics(report: Dict[str, Any], out_path: str) -> str:
    """Grouped bars per class from a metrics.json-style report (undefined scores drawn as 0)."""
    classes = list(report["classes"])
    x = np.arange(len(classes))
    width = 0.8 / len(BAR_METRICS)
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(classes)), 4))
    for i, metric in enumerate(BAR_METRICS):
        values = []
        for name in classes:
            entry = report["classes"][name][metric]
            # aggregated reports store {"mean", "sd", "n"}
            value = entry["mean"] if isinstance(entry, dict) else entry
            values.append(value if value is not None else 0.0)
        ax.bar(x + (i - (len(BAR_METRICS) - 1) / 2) * width, values, width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(classes)
    ax.set_ylim(0, 1)
    ax.legend()
    return _save(fig, out_path)


def plot_overlay(volume: Volume3D, truth: LabelVolume, pred: LabelVolume, slice_index: Optional[int],
                 out_path: str) -> str:
    """Axial slice of `volume` with reference labels in green and the prediction in red.

    All classes are merged; overlapping voxels show yellow. Without `slice_index`
    the slice holding the most reference voxels is drawn.
    """
    if not volume.geometry == truth.geometry == pred.geometry:
        raise GeometryError(f"overlay inputs differ: volume {volume.geometry.describe()}, "
                            f"truth {truth.geometry.describe()}, prediction {pred.geometry.describe()}")
    truth_mask = truth.channels.any(axis=0)
    pred_mask = pred.channels.any(axis=0)
    nz = volume.geometry.dims[2]
    if slice_index is None:
        slice_index = int(np.argmax(truth_mask.sum(axis=(0, 1))))
    if not 0 <= slice_index < nz:
        raise ValueError(f"slice {slice_index} outside 0..{nz - 1}")

    image = volume.data[:, :, slice_index].T
    colours = np.zeros(image.shape + (4,))
    t, p = truth_mask[:, :, slice_index].T, pred_mask[:, :, slice_index].T
    colours[t] = OVERLAY_COLOURS["truth"]
    colours[p] = OVERLAY_COLOURS["prediction"]
    colours[t & p] = OVERLAY_COLOURS["both"]

    fig, ax = plt.subplots(figsize=(6, 6 * image.shape[0] / max(image.shape[1], 1)))
    ax.imshow(image, cmap="gray", origin="lower")
    ax.imshow(colours, origin="lower")
    ax.set_title(f"axial slice {slice_index}: reference (green) / prediction (red)")
    ax.axis("off")
    logger.debug(f"Overlay slice {slice_index}: {int(t.sum())} reference, {int(p.sum())} predicted voxels")
    return _save(fig, out_path)
