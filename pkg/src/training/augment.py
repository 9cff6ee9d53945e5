# Paired slice augmentation
from typing import Optional

import numpy as np

from src.utils.config import AugmentConfig
from src.volume.core import Slice2D, SliceGroup


def flip_group(group: SliceGroup) -> SliceGroup:
    """Left-right flip (along x) of all four slices."""
    def flip(s: Slice2D) -> Slice2D:
        return Slice2D(s.k, s.data[:, ::-1, :], s.subject_id)

    return SliceGroup(group.k, group.subject_id, flip(group.t1w), flip(group.fa),
                      flip(group.precise), flip(group.coarse))


def jitter_intensity(data: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Brightness shift, contrast scaling about the mean and a gamma perturbation.

    Single-channel images have no hue, so the `hue` amplitude drives the gamma exponent.
    A zero amplitude leaves its step out entirely.
    """
    out = data.astype(np.float32)
    if cfg.brightness > 0:
        out = out + np.float32(rng.uniform(-cfg.brightness, cfg.brightness))
    if cfg.contrast > 0:
        mean = out.mean()
        out = (out - mean) * np.float32(rng.uniform(1 - cfg.contrast, 1 + cfg.contrast)) + mean
    if cfg.hue > 0:
        gamma = float(np.exp(rng.uniform(-cfg.hue, cfg.hue)))
        lo, hi = float(out.min()), float(out.max())
        if hi - lo > 1e-12:
            out = (lo + (hi - lo) * ((out - lo) / (hi - lo)) ** gamma).astype(np.float32)
    return out


def augment_slice(group: SliceGroup, cfg: AugmentConfig, rng: np.random.Generator,
                  force_flip: Optional[bool] = None) -> SliceGroup:
    """Spatial flip on all four slices, intensity jitter on T1w and FA only."""
    flip = rng.random() < cfg.flip_prob if force_flip is None else force_flip
    if flip:
        group = flip_group(group)
    t1w = Slice2D(group.k, jitter_intensity(group.t1w.data, cfg, rng), group.subject_id)
    fa = Slice2D(group.k, jitter_intensity(group.fa.data, cfg, rng), group.subject_id)
    return SliceGroup(group.k, group.subject_id, t1w, fa, group.precise, group.coarse)
