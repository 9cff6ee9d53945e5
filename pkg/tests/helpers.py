import numpy as np

from src.volume.core import Geometry, LabelVolume


def random_labels(rng, dims=(10, 10, 10), classes=("a", "b"), density=0.3, geometry=None) -> LabelVolume:
    geometry = geometry or Geometry(dims)
    channels = (rng.random((len(classes),) + tuple(geometry.dims)) < density).astype(np.uint8)
    return LabelVolume(geometry, channels, list(classes))
