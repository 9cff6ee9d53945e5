# Volumetric data model
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np

from src.utils.config import DEFAULT_CLASSES
from src.utils.errors import GeometryError

logger = logging.getLogger(__name__)

DTYPE_TAG = "f32"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Geometry:
    """Grid dimensions, voxel spacing (mm) and the voxel-to-world affine."""

    dims: Tuple[int, int, int]
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise GeometryError(f"dims must be three integers >= 1, got {self.dims}")
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise GeometryError(f"spacing must be three positive numbers, got {self.spacing}")
        affine = np.diag(spacing + (1.0,)) if self.affine is None else np.array(self.affine, dtype=np.float64)
        if affine.shape == (16,):
            affine = affine.reshape(4, 4)
        if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
            raise GeometryError(f"affine must be a finite 4x4 matrix, got shape {affine.shape}")
        if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
            raise GeometryError("affine upper-left 3x3 block is singular")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _frozen(affine))

    def __eq__(self, other):
        if not isinstance(other, Geometry):
            return NotImplemented
        return (self.dims == other.dims and self.spacing == other.spacing
                and np.array_equal(self.affine, other.affine))

    def __hash__(self):
        return hash((self.dims, self.spacing, self.affine.tobytes()))

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    def voxel_to_world(self, indices: np.ndarray) -> np.ndarray:
        """Map (N, 3) voxel indices to (N, 3) world mm coordinates."""
        indices = np.asarray(indices, dtype=np.float64).reshape(-1, 3)
        return indices @ self.affine[:3, :3].T + self.affine[:3, 3]

    def world_to_voxel(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 3) world mm coordinates to continuous voxel indices."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.linalg.solve(self.affine[:3, :3], (points - self.affine[:3, 3]).T).T

    def describe(self) -> str:
        return f"dims={self.dims} spacing={self.spacing}"


@dataclass(frozen=True)
class Volume3D:
    """A 3-D float32 scalar grid indexed (x, y, z) with its geometry."""

    geometry: Geometry
    data: np.ndarray
    dtype: str = DTYPE_TAG

    def __post_init__(self):
        if self.dtype != DTYPE_TAG:
            raise GeometryError(f"unsupported dtype tag '{self.dtype}'")
        data = np.array(self.data, dtype=np.float32)
        if data.shape != self.geometry.dims:
            raise GeometryError(f"data shape {data.shape} does not match dims {self.geometry.dims}")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def zeros(cls, geometry: Geometry) -> "Volume3D":
        return cls(geometry, np.zeros(geometry.dims, dtype=np.float32))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.geometry.dims

    @property
    def spacing(self) -> Tuple[float, float, float]:
        return self.geometry.spacing

    @property
    def affine(self) -> np.ndarray:
        return self.geometry.affine

    def with_data(self, data: np.ndarray) -> "Volume3D":
        return Volume3D(self.geometry, data)

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class LabelVolume:
    """C binary channels sharing one geometry, one channel per nerve class."""

    geometry: Geometry
    channels: np.ndarray
    class_names: List[str] = field(default_factory=lambda: list(DEFAULT_CLASSES))

    def __post_init__(self):
        channels = np.array(self.channels)
        if channels.ndim == 3:
            channels = channels[None]
        if channels.ndim != 4 or channels.shape[1:] != self.geometry.dims:
            raise GeometryError(
                f"channels shape {channels.shape} does not match (C,) + dims {self.geometry.dims}")
        if channels.shape[0] < 1 or channels.shape[0] != len(self.class_names):
            raise GeometryError(
                f"{channels.shape[0]} channels for {len(self.class_names)} class names")
        if not np.all((channels == 0) | (channels == 1)):
            raise GeometryError("label channels must be binary")
        object.__setattr__(self, "channels", _frozen(channels.astype(np.uint8)))
        object.__setattr__(self, "class_names", list(self.class_names))

    @classmethod
    def empty(cls, geometry: Geometry, class_names: Sequence[str]) -> "LabelVolume":
        return cls(geometry, np.zeros((len(class_names),) + geometry.dims, dtype=np.uint8), list(class_names))

    @property
    def num_classes(self) -> int:
        return self.channels.shape[0]

    def channel(self, index: int) -> Volume3D:
        return Volume3D(self.geometry, self.channels[index])

    @classmethod
    def from_channels(cls, volumes: Sequence[Volume3D], class_names: Sequence[str]) -> "LabelVolume":
        geometry = volumes[0].geometry
        for v in volumes[1:]:
            if v.geometry != geometry:
                raise GeometryError(f"channel geometry {v.geometry.describe()} != {geometry.describe()}")
        return cls(geometry, np.stack([v.data for v in volumes]), list(class_names))

    def __eq__(self, other):
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return (self.geometry == other.geometry and self.class_names == other.class_names
                and np.array_equal(self.channels, other.channels))

    __hash__ = None


@dataclass(frozen=True)
class ModalitySample:
    """One subject: aligned T1w and FA volumes with precise (G) and coarse labels."""

    subject_id: str
    t1w: Volume3D
    fa: Volume3D
    precise: LabelVolume
    coarse: LabelVolume
    provenance: Literal["phantom", "imported"] = "phantom"

    def __post_init__(self):
        geometry = self.t1w.geometry
        for name in ("fa", "precise", "coarse"):
            other = getattr(self, name).geometry
            if other != geometry:
                raise GeometryError(
                    f"{self.subject_id}: {name} geometry {other.describe()} != t1w {geometry.describe()}")
        if self.precise.class_names != self.coarse.class_names:
            raise GeometryError(f"{self.subject_id}: precise and coarse class lists differ")
        if self.fa.data.min() < 0.0 or self.fa.data.max() > 1.0:
            raise GeometryError(f"{self.subject_id}: FA values must lie in [0, 1]")

    @property
    def geometry(self) -> Geometry:
        return self.t1w.geometry


@dataclass(frozen=True)
class Slice2D:
    """Axial plane k (along z) of one or more channels, shape (C, nx, ny)."""

    k: int
    data: np.ndarray
    subject_id: str = ""

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise GeometryError(f"slice data must be (C, nx, ny), got shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape[1:]


@dataclass(frozen=True)
class SliceGroup:
    """The four aligned slices of a subject at plane k."""

    k: int
    subject_id: str
    t1w: Slice2D
    fa: Slice2D
    precise: Slice2D
    coarse: Slice2D
