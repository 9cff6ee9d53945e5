# Overlap and distance metrics on binarized 3-D label volumes
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from src.utils.errors import GeometryError
from src.volume.core import LabelVolume

logger = logging.getLogger(__name__)

SCORE_NAMES = ("dice", "jaccard", "precision", "recall", "ahd")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _check_pair(pred: LabelVolume, truth: LabelVolume):
    if pred.geometry != truth.geometry:
        raise GeometryError(
            f"prediction {pred.geometry.describe()} does not match truth {truth.geometry.describe()}")
    if pred.class_names != truth.class_names:
        raise GeometryError(f"class lists differ: {pred.class_names} vs {truth.class_names}")


def confusion_counts(pred: LabelVolume, truth: LabelVolume) -> List[ConfusionCounts]:
    """Voxel counts per class."""
    _check_pair(pred, truth)
    counts = []
    for p, t in zip(pred.channels.astype(bool), truth.channels.astype(bool)):
        tp = int(np.count_nonzero(p & t))
        fp = int(np.count_nonzero(p & ~t))
        fn = int(np.count_nonzero(~p & t))
        counts.append(ConfusionCounts(tp, fp, fn, int(p.size) - tp - fp - fn))
    return counts


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator > 0 else None


def overlap_scores(c: ConfusionCounts) -> Dict[str, Optional[float]]:
    """Dice, Jaccard, precision and recall; None where the denominator is zero."""
    return {
        "dice": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        "jaccard": _ratio(c.tp, c.tp + c.fp + c.fn),
        "precision": _ratio(c.tp, c.tp + c.fp),
        "recall": _ratio(c.tp, c.tp + c.fn),
    }


def ahd(a: np.ndarray, b: np.ndarray, spacing: Sequence[float] = (1.0, 1.0, 1.0),
        affine: Optional[np.ndarray] = None) -> Optional[float]:
    """Average Hausdorff distance in mm between two voxel index sets, (N, 3) each.

    Half the sum of both directed mean nearest-neighbour distances. None when
    either set is empty.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        return None
    if affine is not None:
        affine = np.asarray(affine, dtype=np.float64)
        a = a @ affine[:3, :3].T + affine[:3, 3]
        b = b @ affine[:3, :3].T + affine[:3, 3]
    else:
        a, b = a * np.asarray(spacing), b * np.asarray(spacing)
    a_to_b, _ = cKDTree(b).query(a)
    b_to_a, _ = cKDTree(a).query(b)
    return 0.5 * (float(np.mean(a_to_b)) + float(np.mean(b_to_a)))


@dataclass
class MetricsReport:
    class_names: List[str]
    scores: Dict[str, Dict[str, Optional[float]]]
    counts: Dict[str, ConfusionCounts]
    mean: Dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def undefined(self) -> List[str]:
        """Classes with at least one undefined score."""
        return [name for name in self.class_names if any(v is None for v in self.scores[name].values())]

    def to_dict(self) -> Dict[str, Any]:
        classes = {}
        for name in self.class_names:
            c = self.counts[name]
            classes[name] = dict(self.scores[name], tp=c.tp, fp=c.fp, fn=c.fn)
        return {"classes": classes, "mean": dict(self.mean), "undefined": self.undefined}


def _defined_mean(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def evaluate_case(pred: LabelVolume, truth: LabelVolume) -> MetricsReport:
    """Per-class scores and unweighted means over the classes where each score is defined."""
    counts = confusion_counts(pred, truth)
    scores = {}
    for i, (name, c) in enumerate(zip(truth.class_names, counts)):
        class_scores = overlap_scores(c)
        class_scores["ahd"] = ahd(np.argwhere(pred.channels[i]), np.argwhere(truth.channels[i]),
                                  affine=truth.geometry.affine)
        scores[name] = class_scores
    report = MetricsReport(list(truth.class_names), scores, dict(zip(truth.class_names, counts)))
    report.mean = {metric: _defined_mean([scores[n][metric] for n in report.class_names]) for metric in SCORE_NAMES}
    if report.undefined:
        logger.info(f"Undefined scores excluded from means for: {', '.join(report.undefined)}")
    return report


def _mean_sd(values: Sequence[Optional[float]]) -> Dict[str, Optional[float]]:
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    if defined.size == 0:
        return {"mean": None, "sd": None, "n": 0}
    sd = float(defined.std(ddof=1)) if defined.size > 1 else 0.0
    return {"mean": float(defined.mean()), "sd": sd, "n": int(defined.size)}


def aggregate_reports(reports: Sequence[MetricsReport]) -> Dict[str, Any]:
    """Mean and sample sd across subjects, per class and for the per-subject means."""
    if not reports:
        raise ValueError("no reports to aggregate")
    class_names = reports[0].class_names
    per_class = {
        name: {metric: _mean_sd([r.scores[name][metric] for r in reports]) for metric in SCORE_NAMES}
        for name in class_names
    }
    overall = {metric: _mean_sd([r.mean.get(metric) for r in reports]) for metric in SCORE_NAMES}
    return {"subjects": len(reports), "classes": per_class, "mean": overall}
