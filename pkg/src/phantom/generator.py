# Synthetic T1w/FA phantoms with tube-shaped cranial nerves
import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.special import comb

from src.tractlabels.labels import streamlines_to_label_volume
from src.tractlabels.streamlines import Streamline, StreamlineBundle
from src.utils.config import PhantomConfig, VoxelizeConfig
from src.utils.errors import PhantomError
from src.volume.core import Geometry, LabelVolume, ModalitySample, Volume3D

logger = logging.getLogger(__name__)

MIN_DIM = 32
CENTERLINE_STEP = 0.25

# substream tags
_TUBES, _T1W_NOISE, _FA_NOISE, _COARSE, _STREAMLINES = range(5)


def substream(seed: int, index: int, purpose: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, subject index, purpose)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index, purpose])))


@dataclass
class Tube:
    class_index: int
    side: str
    centerline: np.ndarray
    radii: np.ndarray


def bezier_curve(control: np.ndarray, step: float = CENTERLINE_STEP) -> np.ndarray:
    """Sample a Bezier curve so consecutive samples are at most ~`step` voxels apart."""
    degree = len(control) - 1
    polygon_length = np.linalg.norm(np.diff(control, axis=0), axis=1).sum()
    t = np.linspace(0.0, 1.0, int(math.ceil(polygon_length / step)) + 2)[:, None]
    basis = np.hstack([comb(degree, i) * t ** i * (1 - t) ** (degree - i) for i in range(degree + 1)])
    return basis @ control


def phantom_geometry(cfg: PhantomConfig) -> Geometry:
    return Geometry(cfg.dims, cfg.spacing)


def build_tubes(cfg: PhantomConfig, index: int) -> List[Tube]:
    """Random left/right tube pairs, one z band per class, mirrored about the x midline.

    With `cfg.chiasm` the first class becomes an X: each tube starts in one
    hemisphere and ends in the other, crossing its mirror image on the midline.
    """
    nx, ny, nz = cfg.dims
    if min(cfg.dims) < MIN_DIM:
        raise PhantomError(f"dims {cfg.dims} too small to fit tubes, need >= {MIN_DIM} on every axis")

    rng = substream(cfg.seed, index, _TUBES)
    r_low, r_high = cfg.radius_range
    margin = math.ceil(r_high) + 2
    x_low, x_high = margin, nx / 2 - 3 - r_high
    if x_high <= x_low:
        raise PhantomError(f"nx={nx} leaves no room for a tube of radius {r_high} per hemisphere")
    span_y = ny - 1 - 2 * margin
    n_classes = len(cfg.classes)

    tubes = []
    for c in range(n_classes):
        z_center = margin + (c + 0.5) * (nz - 1 - 2 * margin) / n_classes
        crossing = cfg.chiasm and c == 0 and cfg.tubes_per_class == 2
        control = None
        for side in ("left", "right")[: cfg.tubes_per_class]:
            if crossing and side == "right":
                # exact mirror of the left tube, so the pair meets on the midline
                control = control.copy()
                control[:, 0] = nx - 1 - control[:, 0]
            else:
                y_start = margin + rng.uniform(0.0, 0.25) * span_y
                y_end = ny - 1 - margin - rng.uniform(0.0, 0.25) * span_y
                y = np.linspace(y_start, y_end, cfg.control_points)
                x = rng.uniform(x_low, x_high, cfg.control_points)
                if crossing:
                    half = cfg.control_points // 2
                    x[half:] = nx - 1 - x[half:]
                elif side == "right":
                    x = nx - 1 - x
                z = np.clip(z_center + rng.uniform(-2.0, 2.0, cfg.control_points), margin, nz - 1 - margin)
                control = np.stack([x, y, z], axis=1)
            centerline = bezier_curve(control)
            r0, r1 = rng.uniform(r_low, r_high, 2)
            radii = np.linspace(r0, r1, len(centerline))
            tubes.append(Tube(c, side, centerline, radii))
    return tubes


def _rasterize(tube: Tube, dims) -> tuple:
    """(bbox slices, inside mask, FA weight) of one tube in its bounding box."""
    reach = tube.radii.max() + 2.0
    lo = np.maximum(np.floor(tube.centerline.min(axis=0) - reach).astype(int), 0)
    hi = np.minimum(np.ceil(tube.centerline.max(axis=0) + reach).astype(int) + 1, dims)
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    points = np.indices(tuple(hi - lo)).reshape(3, -1).T + lo
    distance, nearest = cKDTree(tube.centerline).query(points)
    radius = tube.radii[nearest]
    ratio = distance / radius
    # bright core with a quadratic falloff, Gaussian skirt outside the wall
    weight = np.where(ratio <= 1.0, 1.0 - 0.3 * ratio ** 2, 0.7 * np.exp(-((distance - radius) / 0.75) ** 2))
    shape = tuple(hi - lo)
    return box, (ratio <= 1.0).reshape(shape), weight.reshape(shape)


def _shift(mask: np.ndarray, offset) -> np.ndarray:
    """Integer translation with zero fill."""
    out = np.zeros_like(mask)
    if any(abs(int(s)) >= n for s, n in zip(offset, mask.shape)):
        return out
    src = tuple(slice(max(0, -int(s)), n - max(0, int(s))) for s, n in zip(offset, mask.shape))
    dst = tuple(slice(max(0, int(s)), n - max(0, -int(s))) for s, n in zip(offset, mask.shape))
    out[dst] = mask[src]
    return out


def flip_boundary(mask: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each voxel on the inner or outer 6-connected boundary with probability `rate`."""
    structure = ndimage.generate_binary_structure(3, 1)
    boundary = ndimage.binary_dilation(mask, structure) & ~ndimage.binary_erosion(mask, structure)
    flips = rng.random(mask.shape) < rate
    return mask ^ (boundary & flips)


def degrade_to_coarse(precise: LabelVolume, cfg: PhantomConfig, seed: int) -> LabelVolume:
    """Atlas-like coarse labels: dilate, flip boundary voxels, translate; each channel independently."""
    structure = ndimage.generate_binary_structure(3, 1)
    channels = []
    for c in range(precise.num_classes):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
        mask = precise.channels[c].astype(bool)
        if cfg.dilation_radius > 0:
            mask = ndimage.binary_dilation(mask, structure, iterations=cfg.dilation_radius)
        if cfg.flip_rate > 0:
            mask = flip_boundary(mask, cfg.flip_rate, rng)
        if cfg.max_translation > 0:
            mask = _shift(mask, rng.integers(-cfg.max_translation, cfg.max_translation + 1, size=3))
        channels.append(mask)
    return LabelVolume(precise.geometry, np.stack(channels).astype(np.uint8), precise.class_names)


def phantom_streamlines(cfg: PhantomConfig, index: int, tubes: Optional[List[Tube]] = None) -> StreamlineBundle:
    """Tractography-like bundles: jittered copies of each tube centerline, in world mm."""
    tubes = tubes if tubes is not None else build_tubes(cfg, index)
    geometry = phantom_geometry(cfg)
    rng = substream(cfg.seed, index, _STREAMLINES)
    bundle = StreamlineBundle(geometry=geometry)
    for t, tube in enumerate(tubes):
        # roughly one point per voxel along the centerline
        stride = max(1, int(round(1.0 / CENTERLINE_STEP)))
        base = tube.centerline[::stride]
        for s in range(cfg.streamlines_per_tube):
            offset = rng.normal(0.0, cfg.streamline_jitter, 3)
            wobble = rng.normal(0.0, 0.15, base.shape)
            points = geometry.voxel_to_world(base + offset + wobble)
            bundle.add(Streamline(points, cfg.classes[tube.class_index], f"{tube.side}-{t}-{s}"))
    return bundle


def coarse_agreement(sample: ModalitySample) -> Dict[str, float]:
    """Per-class Dice of coarse against precise labels."""
    scores = {}
    for c, name in enumerate(sample.precise.class_names):
        a = sample.precise.channels[c].astype(bool)
        b = sample.coarse.channels[c].astype(bool)
        total = a.sum() + b.sum()
        scores[name] = float(2.0 * (a & b).sum() / total) if total else 1.0
    return scores


def generate_phantom(cfg: PhantomConfig, index: int,
                     voxelize_cfg: Optional[VoxelizeConfig] = None) -> ModalitySample:
    """Deterministic synthetic subject for (cfg.seed, index)."""
    tubes = build_tubes(cfg, index)
    geometry = phantom_geometry(cfg)
    dims = cfg.dims
    n_classes = len(cfg.classes)

    precise = np.zeros((n_classes,) + dims, dtype=bool)
    fa_weight = np.zeros(dims, dtype=np.float64)
    for tube in tubes:
        box, inside, weight = _rasterize(tube, dims)
        precise[(tube.class_index,) + box] |= inside
        fa_weight[box] = np.maximum(fa_weight[box], weight)

    # ellipsoidal "brain" plus every nerve voxel
    grid = np.indices(dims, dtype=np.float64)
    centre = (np.array(dims, dtype=np.float64) - 1) / 2
    radii = 0.45 * np.array(dims, dtype=np.float64)
    ellipsoid = sum(((grid[a] - centre[a]) / radii[a]) ** 2 for a in range(3)) <= 1.0
    nerve = precise.any(axis=0)
    tissue = ellipsoid | nerve

    t1w = np.where(nerve, cfg.t1w_nerve, np.where(tissue, cfg.t1w_tissue, 0.0))
    t1w = t1w + substream(cfg.seed, index, _T1W_NOISE).normal(0.0, cfg.t1w_noise_sd, dims) * tissue

    fa = cfg.fa_background + (cfg.fa_nerve - cfg.fa_background) * fa_weight
    fa = fa + substream(cfg.seed, index, _FA_NOISE).normal(0.0, cfg.fa_noise_sd, dims)
    fa = np.where(tissue, np.clip(fa, 0.0, 1.0), 0.0)

    subject_id = f"sub-{index:03d}"
    precise_labels = LabelVolume(geometry, precise.astype(np.uint8), cfg.classes)
    if cfg.coarse_mode == "tractography":
        bundle = phantom_streamlines(cfg, index, tubes)
        coarse_labels = streamlines_to_label_volume(bundle, geometry, cfg.classes, voxelize_cfg)
    else:
        coarse_seed = int(np.random.SeedSequence([cfg.seed, index, _COARSE]).generate_state(1)[0])
        coarse_labels = degrade_to_coarse(precise_labels, cfg, coarse_seed)

    return ModalitySample(subject_id, Volume3D(geometry, t1w), Volume3D(geometry, fa),
                          precise_labels, coarse_labels, provenance="phantom")
