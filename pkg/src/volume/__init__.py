from src.volume.core import Geometry, Volume3D, LabelVolume, ModalitySample, Slice2D, SliceGroup
from src.volume.io import read_volume, write_volume, read_label_volume, write_label_volume
from src.volume.ops import (
    resample_with_affine,
    normalize_zscore,
    extract_axial_slices,
    stack_slices,
    stack_label_slices,
)
