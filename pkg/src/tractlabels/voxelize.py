# Streamline-to-voxel mapping by exact grid traversal
import logging
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from src.tractlabels.streamlines import Streamline, StreamlineBundle
from src.volume.core import Geometry, Volume3D

logger = logging.getLogger(__name__)

Voxel = Tuple[int, int, int]


def traverse_segment(p0: np.ndarray, p1: np.ndarray) -> List[Voxel]:
    """Voxels crossed by the segment p0 -> p1, both in continuous voxel indices.

    Voxel i spans [i - 0.5, i + 0.5) on each axis. Amanatides-Woo stepping:
    always advance along the axis whose next boundary is nearest in t.
    """
    start = np.asarray(p0, dtype=np.float64) + 0.5
    direction = np.asarray(p1, dtype=np.float64) + 0.5 - start

    voxel = np.floor(start).astype(np.int64)
    step = np.sign(direction).astype(np.int64)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for axis in range(3):
        if direction[axis] != 0:
            boundary = voxel[axis] + (1 if step[axis] > 0 else 0)
            t_max[axis] = (boundary - start[axis]) / direction[axis]
            t_delta[axis] = abs(1.0 / direction[axis])

    visited = [tuple(int(v) for v in voxel)]
    end = np.floor(start + direction).astype(np.int64)
    steps_left = int(np.abs(end - voxel).sum()) + 3
    while steps_left > 0:
        axis = int(np.argmin(t_max))
        if t_max[axis] > 1.0:
            break
        voxel[axis] += step[axis]
        t_max[axis] += t_delta[axis]
        visited.append(tuple(int(v) for v in voxel))
        steps_left -= 1
    return visited


def streamline_voxels(streamline: Streamline, geometry: Geometry) -> Set[Voxel]:
    """In-grid voxels whose cell the streamline's polyline passes through."""
    indices = geometry.world_to_voxel(streamline.points)
    voxels = set()
    for p0, p1 in zip(indices[:-1], indices[1:]):
        voxels.update(traverse_segment(p0, p1))
    dims = geometry.dims
    return {v for v in voxels if all(0 <= v[a] < dims[a] for a in range(3))}


def voxelize_streamlines(bundle: StreamlineBundle, geometry: Geometry,
                         class_names: Sequence[str] = None) -> Dict[str, Volume3D]:
    """Per-class visit counts: each streamline adds at most 1 to every voxel it crosses."""
    class_names = list(class_names) if class_names is not None else bundle.class_names
    counts = {name: np.zeros(geometry.dims, dtype=np.float32) for name in class_names}
    for name in class_names:
        for streamline in bundle.streamlines.get(name, []):
            voxels = streamline_voxels(streamline, geometry)
            if voxels:
                idx = np.array(sorted(voxels)).T
                counts[name][idx[0], idx[1], idx[2]] += 1
    return {name: Volume3D(geometry, grid) for name, grid in counts.items()}
