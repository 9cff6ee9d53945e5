# Streamline containers and JSON-lines persistence
import os
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from src.utils.errors import StreamlineFormatError
from src.volume.core import Geometry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Streamline:
    """An ordered polyline in world mm tagged with its nerve class."""

    points: np.ndarray
    class_name: str
    id: str = ""

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"streamline {self.id!r}: points must be (N, 3), got {points.shape}")
        if len(points) < 2:
            raise ValueError(f"streamline {self.id!r}: needs at least 2 points, got {len(points)}")
        if not np.all(np.isfinite(points)):
            raise ValueError(f"streamline {self.id!r}: non-finite coordinates")
        if np.any(np.all(points[1:] == points[:-1], axis=1)):
            raise ValueError(f"streamline {self.id!r}: consecutive points must be distinct")
        points.flags.writeable = False
        object.__setattr__(self, "points", points)


@dataclass
class StreamlineBundle:
    """Streamlines grouped per nerve class, with an optional reference geometry."""

    streamlines: Dict[str, List[Streamline]] = field(default_factory=dict)
    geometry: Optional[Geometry] = None

    @classmethod
    def from_list(cls, streamlines: Iterable[Streamline], geometry: Optional[Geometry] = None) -> "StreamlineBundle":
        bundle = cls(geometry=geometry)
        for s in streamlines:
            bundle.add(s)
        return bundle

    def add(self, streamline: Streamline):
        self.streamlines.setdefault(streamline.class_name, []).append(streamline)

    def __len__(self) -> int:
        return sum(len(v) for v in self.streamlines.values())

    def __iter__(self):
        for group in self.streamlines.values():
            yield from group

    @property
    def class_names(self) -> List[str]:
        return list(self.streamlines)

    def check_classes(self, class_names: List[str]):
        unknown = sorted(set(self.streamlines) - set(class_names))
        if unknown:
            raise StreamlineFormatError(f"bundle classes {unknown} not in label classes {class_names}")


def read_streamlines(path: str, geometry: Optional[Geometry] = None) -> StreamlineBundle:
    """Parse a JSON-lines streamline file: {"id", "class", "points": [[x, y, z], ...]} per line."""
    if not os.path.exists(path):
        raise StreamlineFormatError(f"streamline file not found: {path}")
    bundle = StreamlineBundle(geometry=geometry)
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                bundle.add(Streamline(record["points"], str(record["class"]), str(record.get("id", line_number))))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise StreamlineFormatError(f"{path}:{line_number}: malformed streamline ({e})") from e
    logger.info(f"Read {len(bundle)} streamlines in {len(bundle.class_names)} classes from {path}")
    return bundle


def write_streamlines(bundle: StreamlineBundle, path: str):
    """Write `bundle` as JSON lines; floats keep full repr precision."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for s in bundle:
            record = {"id": s.id, "class": s.class_name, "points": s.points.tolist()}
            f.write(json.dumps(record) + "\n")
