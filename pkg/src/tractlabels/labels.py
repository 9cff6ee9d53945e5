# Voxel-based region generation and transfer to subject space
import logging
from typing import Optional, Sequence

import numpy as np

from src.tractlabels.islands import remove_islands
from src.tractlabels.streamlines import StreamlineBundle
from src.tractlabels.voxelize import voxelize_streamlines
from src.utils.config import VoxelizeConfig
from src.volume.core import Geometry, LabelVolume, Volume3D
from src.volume.ops import resample_with_affine

logger = logging.getLogger(__name__)


def streamlines_to_label_volume(bundle: StreamlineBundle, geometry: Geometry, class_names: Sequence[str],
                                config: Optional[VoxelizeConfig] = None) -> LabelVolume:
    """voxelize -> threshold at tau -> remove_islands, per class."""
    config = config or VoxelizeConfig()
    bundle.check_classes(list(class_names))
    counts = voxelize_streamlines(bundle, geometry, class_names)

    channels = []
    for name in class_names:
        binary = Volume3D(geometry, (counts[name].data >= config.tau).astype(np.float32))
        cleaned = remove_islands(binary, connectivity=config.connectivity,
                                 min_size=config.min_island, keep_largest=config.keep_largest)
        logger.info(f"{name}: {int(binary.data.sum())} voxels at tau={config.tau}, "
                    f"{int(cleaned.data.sum())} after island removal")
        channels.append(cleaned)
    return LabelVolume.from_channels(channels, class_names)


def transfer_labels(atlas: LabelVolume, transform: np.ndarray, geometry: Geometry) -> LabelVolume:
    """Carry atlas labels into a subject grid with nearest-neighbour resampling.

    `transform` maps subject world coordinates to atlas world coordinates.
    """
    channels = [resample_with_affine(atlas.channel(i), geometry, mode="nearest", transform=transform)
                for i in range(atlas.num_classes)]
    return LabelVolume.from_channels(channels, atlas.class_names)
