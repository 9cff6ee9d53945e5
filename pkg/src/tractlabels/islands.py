# Connected-component island removal
import logging
from typing import Optional

import numpy as np
from scipy import ndimage

from src.volume.core import Volume3D

logger = logging.getLogger(__name__)

_RANK = {6: 1, 18: 2, 26: 3}


def connectivity_structure(connectivity: int = 26) -> np.ndarray:
    if connectivity not in _RANK:
        raise ValueError(f"connectivity must be one of {sorted(_RANK)}, got {connectivity}")
    return ndimage.generate_binary_structure(3, _RANK[connectivity])


def remove_islands(label: Volume3D, connectivity: int = 26, min_size: Optional[int] = None,
                   keep_largest: bool = False) -> Volume3D:
    """Drop connected components from a binary volume.

    keep_largest keeps exactly one component (ties go to the component whose
    smallest x-fastest linear index is lowest); otherwise components smaller
    than `min_size` are removed.
    """
    mask = label.data > 0
    components, count = ndimage.label(mask, structure=connectivity_structure(connectivity))
    if count == 0:
        return label.with_data(np.zeros(label.dims, dtype=np.float32))

    ids = np.arange(1, count + 1)
    sizes = ndimage.sum_labels(mask, components, index=ids)
    if keep_largest:
        nx, ny, _ = label.dims
        x, y, z = np.indices(label.dims)
        linear = x + nx * (y + ny * z)
        seeds = ndimage.minimum(linear, components, index=ids)
        winner = ids[np.lexsort((seeds, -sizes))[0]]
        keep = components == winner
    else:
        threshold = min_size or 1
        kept_ids = ids[sizes >= threshold]
        keep = np.isin(components, kept_ids)
        logger.debug(f"Kept {len(kept_ids)}/{count} components of size >= {threshold}")
    return label.with_data(keep.astype(np.float32))
