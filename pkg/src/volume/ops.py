# Resampling, normalization and axial slice decomposition
import logging
from typing import List, Literal, Optional, Sequence

import numpy as np
from scipy import ndimage

from src.utils.errors import GeometryError
from src.volume.core import Geometry, LabelVolume, ModalitySample, Slice2D, SliceGroup, Volume3D

logger = logging.getLogger(__name__)


def _source_coordinates(src: Geometry, target: Geometry, transform: Optional[np.ndarray]) -> np.ndarray:
    """Continuous source indices of every target voxel, shape (3, nx, ny, nz)."""
    matrix = target.affine if transform is None else np.asarray(transform, dtype=np.float64) @ target.affine
    # source index = A_src^-1 . T . A_target . target index
    mapping = np.linalg.solve(src.affine, matrix)
    grid = np.indices(target.dims, dtype=np.float64).reshape(3, -1)
    coords = mapping[:3, :3] @ grid + mapping[:3, 3:4]
    return coords.reshape((3,) + target.dims)


def resample_with_affine(src: Volume3D, target: Geometry, mode: Literal["nearest", "trilinear"] = "trilinear",
                         transform: Optional[np.ndarray] = None) -> Volume3D:
    """Resample `src` onto `target`.

    `transform` optionally maps target world coordinates to source world
    coordinates (a registration result). Samples outside the source grid are 0.
    """
    if mode not in ("nearest", "trilinear"):
        raise ValueError(f"unknown resampling mode '{mode}'")
    if transform is not None:
        transform = np.asarray(transform, dtype=np.float64)
        if transform.shape != (4, 4) or abs(np.linalg.det(transform[:3, :3])) < 1e-12:
            raise GeometryError("registration transform must be an invertible 4x4 matrix")
        if np.array_equal(transform, np.eye(4)):
            transform = None

    if transform is None and target == src.geometry:
        return Volume3D(target, src.data)

    coords = _source_coordinates(src.geometry, target, transform)
    order = 0 if mode == "nearest" else 1
    out = ndimage.map_coordinates(src.data.astype(np.float64), coords, order=order,
                                  mode="grid-constant", cval=0.0, prefilter=False)
    return Volume3D(target, out.astype(np.float32))


def normalize_zscore(volume: Volume3D) -> Volume3D:
    """Z-score over the nonzero (brain) mask; background and degenerate volumes map to 0."""
    data = volume.data.astype(np.float64)
    mask = data != 0
    out = np.zeros_like(data)
    if mask.any():
        values = data[mask]
        mean, std = values.mean(), values.std()
        if std > 1e-12:
            out[mask] = (values - mean) / std
    return volume.with_data(out.astype(np.float32))


def extract_axial_slices(sample: ModalitySample) -> List[SliceGroup]:
    """Split a subject into its nz axial slice groups, k = 0..nz-1."""
    nz = sample.geometry.dims[2]
    groups = []
    for k in range(nz):
        groups.append(SliceGroup(
            k=k,
            subject_id=sample.subject_id,
            t1w=Slice2D(k, sample.t1w.data[:, :, k], sample.subject_id),
            fa=Slice2D(k, sample.fa.data[:, :, k], sample.subject_id),
            precise=Slice2D(k, sample.precise.channels[:, :, :, k], sample.subject_id),
            coarse=Slice2D(k, sample.coarse.channels[:, :, :, k], sample.subject_id),
        ))
    return groups


def _stack(slices: Sequence[Slice2D], geometry: Geometry) -> np.ndarray:
    nx, ny, nz = geometry.dims
    if len(slices) != nz:
        raise GeometryError(f"expected {nz} slices for dims {geometry.dims}, got {len(slices)}")
    for s in slices:
        if s.shape != (nx, ny):
            raise GeometryError(f"slice {s.k} has shape {s.shape}, expected {(nx, ny)}")
    # position in the sequence decides the plane
    return np.stack([s.data for s in slices], axis=-1)


def stack_slices(slices: Sequence[Slice2D], geometry: Geometry, channel: int = 0) -> Volume3D:
    """Reassemble one channel of an ordered slice sequence into a volume."""
    return Volume3D(geometry, _stack(slices, geometry)[channel])


def stack_label_slices(slices: Sequence[Slice2D], geometry: Geometry, class_names: Sequence[str]) -> LabelVolume:
    return LabelVolume(geometry, _stack(slices, geometry), list(class_names))
