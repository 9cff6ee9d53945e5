# Volume persistence: JSON header + little-endian float32 raw payload
import os
import json
import logging
from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from src.utils.errors import VolumeFormatError
from src.volume.core import Geometry, LabelVolume, Volume3D, DTYPE_TAG

logger = logging.getLogger(__name__)

RAW_DTYPE = np.dtype("<f4")
LABELS_INDEX = "labels.json"


class VolumeHeader(BaseModel):
    """Schema of `<name>.json`."""

    model_config = ConfigDict(extra="forbid")

    dims: Tuple[int, int, int]
    spacing: Tuple[float, float, float]
    affine: List[float]
    dtype: Literal["f32"]
    order: Literal["x-fastest"]

    @field_validator("dims")
    @classmethod
    def _positive_dims(cls, value):
        if any(d < 1 for d in value):
            raise ValueError(f"all dims must be >= 1, got {value}")
        return value

    @field_validator("spacing")
    @classmethod
    def _positive_spacing(cls, value):
        if any(s <= 0 for s in value):
            raise ValueError(f"spacing must be strictly positive, got {value}")
        return value

    @field_validator("affine")
    @classmethod
    def _sixteen_values(cls, value):
        if len(value) != 16:
            raise ValueError(f"affine needs 16 row-major values, got {len(value)}")
        return value


def volume_paths(path: str) -> Tuple[str, str]:
    """Return the (header, raw) pair for `path`, with or without an extension."""
    base, ext = os.path.splitext(path)
    if ext not in (".json", ".raw"):
        base = path
    return base + ".json", base + ".raw"


def write_volume(volume: Volume3D, path: str) -> str:
    """Write `volume` as `<path>.json` + `<path>.raw`; returns the header path."""
    if not np.all(np.isfinite(volume.data)):
        raise VolumeFormatError(f"refusing to write non-finite data to {path}")
    header_path, raw_path = volume_paths(path)
    header = {
        "dims": list(volume.dims),
        "spacing": list(volume.spacing),
        "affine": [float(v) for v in volume.affine.reshape(-1)],
        "dtype": DTYPE_TAG,
        "order": "x-fastest",
    }
    directory = os.path.dirname(header_path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(header_path, "w", encoding="utf-8") as f:
            json.dump(header, f, indent=2)
            f.write("\n")
        with open(raw_path, "wb") as f:
            # x-fastest linear order is Fortran order for an (nx, ny, nz) array
            f.write(volume.data.astype(RAW_DTYPE).tobytes(order="F"))
    except OSError as e:
        raise VolumeFormatError(f"cannot write volume to {path}: {e}") from e
    return header_path


def read_volume(path: str) -> Volume3D:
    """Read a volume written by `write_volume` (or any writer following the byte layout)."""
    header_path, raw_path = volume_paths(path)
    for required in (header_path, raw_path):
        if not os.path.exists(required):
            raise VolumeFormatError(f"missing volume file: {required}")

    with open(header_path, "r", encoding="utf-8") as f:
        try:
            raw_header = json.load(f)
        except json.JSONDecodeError as e:
            raise VolumeFormatError(f"{header_path}: header is not valid JSON ({e})") from e
    try:
        header = VolumeHeader.model_validate(raw_header)
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise VolumeFormatError(f"{header_path}: invalid header field(s) {fields}: {e}") from e

    with open(raw_path, "rb") as f:
        payload = f.read()
    expected = int(np.prod(header.dims))
    if len(payload) != expected * RAW_DTYPE.itemsize:
        raise VolumeFormatError(
            f"{raw_path}: size mismatch, header dims {header.dims} need {expected} float32 values "
            f"({expected * RAW_DTYPE.itemsize} bytes), found {len(payload)} bytes")

    data = np.frombuffer(payload, dtype=RAW_DTYPE).reshape(header.dims, order="F")
    geometry = Geometry(header.dims, header.spacing, np.array(header.affine).reshape(4, 4))
    return Volume3D(geometry, data.astype(np.float32))


def channel_stem(index: int, name: str) -> str:
    slug = "".join(c.lower() if c.isalnum() else "_" for c in name).strip("_")
    return f"ch{index}_{slug}"


def write_label_volume(labels: LabelVolume, directory: str) -> str:
    """Write one volume per channel plus `labels.json`; returns the index path."""
    os.makedirs(directory, exist_ok=True)
    files = []
    for i, name in enumerate(labels.class_names):
        stem = channel_stem(i, name)
        write_volume(labels.channel(i), os.path.join(directory, stem))
        files.append(stem + ".json")
    index_path = os.path.join(directory, LABELS_INDEX)
    with open(index_path, "w", encoding="utf-8") as f:
        json.dump({"classes": labels.class_names, "channels": files}, f, indent=2)
        f.write("\n")
    return index_path


def read_label_volume(path: str) -> LabelVolume:
    """Read a label directory (or its `labels.json`)."""
    index_path = path if path.endswith(".json") else os.path.join(path, LABELS_INDEX)
    if not os.path.exists(index_path):
        raise VolumeFormatError(f"missing label index: {index_path}")
    with open(index_path, "r", encoding="utf-8") as f:
        index = json.load(f)
    if set(index) != {"classes", "channels"} or len(index["classes"]) != len(index["channels"]):
        raise VolumeFormatError(f"{index_path}: expected matching 'classes' and 'channels' lists")
    directory = os.path.dirname(index_path)
    volumes = [read_volume(os.path.join(directory, name)) for name in index["channels"]]
    return LabelVolume.from_channels(volumes, index["classes"])
