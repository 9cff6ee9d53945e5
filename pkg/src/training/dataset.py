# Slice-level torch dataset over phantom subjects
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from src.phantom.generator import flip_boundary
from src.training.augment import augment_slice
from src.utils.config import AugmentConfig
from src.volume.core import LabelVolume, ModalitySample, Slice2D, SliceGroup
from src.volume.ops import extract_axial_slices, normalize_zscore

logger = logging.getLogger(__name__)

SIZE_MULTIPLE = 16


def pad_to_multiple(array: np.ndarray, multiple: int = SIZE_MULTIPLE) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Reflect-pad the last two axes up to a multiple; returns the array and the original (H, W)."""
    h, w = array.shape[-2:]
    pad_h, pad_w = (-h) % multiple, (-w) % multiple
    if pad_h == 0 and pad_w == 0:
        return array, (h, w)
    pad = [(0, 0)] * (array.ndim - 2) + [(0, pad_h), (0, pad_w)]
    return np.pad(array, pad, mode="reflect"), (h, w)


def corrupt_labels(labels: LabelVolume, rate: float, seed: int) -> LabelVolume:
    """Flip boundary voxels of every channel with probability `rate`."""
    if rate <= 0:
        return labels
    channels = []
    for c in range(labels.num_classes):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
        channels.append(flip_boundary(labels.channels[c].astype(bool), rate, rng))
    return LabelVolume(labels.geometry, np.stack(channels).astype(np.uint8), labels.class_names)


def normalized_slices(sample: ModalitySample, precise: Optional[LabelVolume] = None) -> List[SliceGroup]:
    """Axial slice groups with z-scored T1w and FA planes."""
    if precise is not None:
        sample = ModalitySample(sample.subject_id, sample.t1w, sample.fa, precise, sample.coarse, sample.provenance)
    t1w = normalize_zscore(sample.t1w).data
    fa = normalize_zscore(sample.fa).data
    return [SliceGroup(g.k, g.subject_id, Slice2D(g.k, t1w[:, :, g.k], g.subject_id),
                       Slice2D(g.k, fa[:, :, g.k], g.subject_id), g.precise, g.coarse)
            for g in extract_axial_slices(sample)]


class SliceDataset(Dataset):
    """All axial slices of the given subjects, empty-label slices included."""

    def __init__(self, samples: Sequence[ModalitySample], augment: Optional[AugmentConfig] = None,
                 seed: int = 0, label_noise_flip_rate: float = 0.0):
        self.augment = augment
        self.seed = seed
        self.epoch = 0
        self.groups: List[SliceGroup] = []
        for s, sample in enumerate(samples):
            precise = corrupt_labels(sample.precise, label_noise_flip_rate, seed * 100003 + s)
            self.groups.extend(normalized_slices(sample, precise))
        logger.info(f"Slice dataset: {len(self.groups)} slices from {len(samples)} subjects")

    def set_epoch(self, epoch: int):
        """Augmentation draws depend on (seed, epoch, index)."""
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.groups)

    def __getitem__(self, index: int) -> Dict[str, torch.Tensor]:
        group = self.groups[index]
        if self.augment is not None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.epoch, index]))
            group = augment_slice(group, self.augment, rng)
        arrays = {name: pad_to_multiple(getattr(group, name).data)[0]
                  for name in ("t1w", "fa", "precise", "coarse")}
        item = {name: torch.from_numpy(np.array(a, dtype=np.float32)) for name, a in arrays.items()}
        item["k"] = group.k
        return item
