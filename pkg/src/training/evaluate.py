# Volumetric inference and held-out evaluation
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from tqdm import tqdm

from src.metrics.segmentation import MetricsReport, aggregate_reports, evaluate_case
from src.model.dclnet import DCLNet, dclnet_forward, load_checkpoint
from src.phantom.dataset import Manifest
from src.training.dataset import SIZE_MULTIPLE, pad_to_multiple
from src.utils.config import DEFAULT_CLASSES
from src.utils.errors import GeometryError
from src.volume.core import LabelVolume, Volume3D
from src.volume.ops import normalize_zscore

logger = logging.getLogger(__name__)


@dataclass
class SubjectPrediction:
    labels: LabelVolume
    probabilities: List[Volume3D]


def _resolve_model(model: Union[str, DCLNet], device: str = "cpu") -> DCLNet:
    if isinstance(model, DCLNet):
        return model
    loaded, _ = load_checkpoint(model, map_location=device)
    return loaded.to(device)


@torch.no_grad()
def predict_subject(model: Union[str, DCLNet], t1w: Volume3D, fa: Volume3D, threshold: float = 0.5,
                    class_names: Optional[Sequence[str]] = None, batch_size: int = 16,
                    device: str = "cpu") -> SubjectPrediction:
    """Slice-wise P1 in eval mode, stacked back to 3-D and binarized at `threshold`."""
    if t1w.geometry != fa.geometry:
        raise GeometryError(f"T1w {t1w.geometry.describe()} and FA {fa.geometry.describe()} are not aligned")
    model = _resolve_model(model, device)
    nx, ny, nz = t1w.dims
    # (nz, 1, nx, ny) slice stacks
    t1w_slices = np.moveaxis(normalize_zscore(t1w).data, -1, 0)[:, None]
    fa_slices = np.moveaxis(normalize_zscore(fa).data, -1, 0)[:, None]
    t1w_slices, _ = pad_to_multiple(t1w_slices)
    fa_slices, _ = pad_to_multiple(fa_slices)
    if t1w_slices.shape[-2:] != (nx, ny):
        logger.info(f"Reflect-padding slices {(nx, ny)} -> {t1w_slices.shape[-2:]} (multiple of {SIZE_MULTIPLE})")

    outputs = []
    for start in range(0, nz, batch_size):
        x_t1w = torch.from_numpy(np.array(t1w_slices[start:start + batch_size], dtype=np.float32)).to(device)
        x_fa = torch.from_numpy(np.array(fa_slices[start:start + batch_size], dtype=np.float32)).to(device)
        pair = dclnet_forward(model, x_t1w, x_fa, mode="eval")
        outputs.append(pair.p1[:, :, :nx, :ny].cpu().numpy())
    # (nz, C, nx, ny) -> (C, nx, ny, nz)
    probs = np.moveaxis(np.concatenate(outputs, axis=0), 0, -1).astype(np.float32)

    names = list(class_names) if class_names is not None else list(DEFAULT_CLASSES)[:probs.shape[0]]
    if len(names) != probs.shape[0]:
        raise GeometryError(f"model predicts {probs.shape[0]} classes but {len(names)} class names were given")
    labels = LabelVolume(t1w.geometry, (probs >= threshold).astype(np.uint8), names)
    probabilities = [Volume3D(t1w.geometry, p) for p in probs]
    return SubjectPrediction(labels, probabilities)


@dataclass
class EvaluationResult:
    reports: Dict[str, MetricsReport]
    aggregate: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {"subjects": {sid: r.to_dict() for sid, r in self.reports.items()}, "aggregate": self.aggregate}

    def save(self, path: str):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def evaluate_model(model: Union[str, DCLNet], manifest: Manifest, subject_ids: Optional[Sequence[str]] = None,
                   threshold: float = 0.5, device: str = "cpu", progress: bool = True) -> EvaluationResult:
    """Per-subject 3-D reports on P1 plus mean and sd across subjects."""
    model = _resolve_model(model, device)
    subject_ids = list(subject_ids) if subject_ids is not None else manifest.subject_ids
    reports = {}
    for subject_id in tqdm(subject_ids, desc="evaluate", disable=not progress):
        sample = manifest.load(subject_id)
        prediction = predict_subject(model, sample.t1w, sample.fa, threshold, sample.precise.class_names,
                                     device=device)
        reports[subject_id] = evaluate_case(prediction.labels, sample.precise)
    return EvaluationResult(reports, aggregate_reports(list(reports.values())))
