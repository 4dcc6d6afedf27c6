"""MOTChallenge-format record IO and lossless patch storage.

Records follow the standard CSV layout "frame,id,left,top,width,height,
conf,x,y,z". Values are written back with the shortest exact decimal form
so that canonical files survive a read/write roundtrip byte for byte.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .graph import BBox, Detection

_FIELDS = 10


@dataclass(frozen=True)
class MotRecord:
    """One CSV row; id is -1 for raw detections, positive for track boxes."""

    frame: int
    track_id: int
    left: float
    top: float
    width: float
    height: float
    conf: float
    world: Tuple[float, float, float] = (-1.0, -1.0, -1.0)

    def __post_init__(self):
        if self.frame < 1:
            raise ValueError(f"frame must be >= 1, got {self.frame}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(
                f"box dimensions must be positive, got {self.width} x {self.height}"
            )
        values = (self.left, self.top, self.width, self.height, self.conf, *self.world)
        if not all(np.isfinite(values)):
            raise ValueError(f"non-finite fields in record {values}")
        object.__setattr__(self, "world", tuple(float(w) for w in self.world))

    @property
    def box(self) -> BBox:
        return BBox(self.left, self.top, self.width, self.height)


def _fmt(value: float) -> str:
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def read_mot(path) -> List[MotRecord]:
    """Parse a MOT CSV file; malformed lines report their line number."""
    records = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != _FIELDS:
                raise ValueError(
                    f"{path}:{lineno}: expected {_FIELDS} fields, got {len(parts)}"
                )
            try:
                record = MotRecord(
                    frame=int(parts[0]),
                    track_id=int(parts[1]),
                    left=float(parts[2]),
                    top=float(parts[3]),
                    width=float(parts[4]),
                    height=float(parts[5]),
                    conf=float(parts[6]),
                    world=(float(parts[7]), float(parts[8]), float(parts[9])),
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            records.append(record)
    return records


def write_mot(source, path):
    """Write records (or anything exposing to_mot_records) as MOT CSV."""
    records = source.to_mot_records() if hasattr(source, "to_mot_records") else source
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fields = [
                str(rec.frame),
                str(rec.track_id),
                _fmt(rec.left),
                _fmt(rec.top),
                _fmt(rec.width),
                _fmt(rec.height),
                _fmt(rec.conf),
                _fmt(rec.world[0]),
                _fmt(rec.world[1]),
                _fmt(rec.world[2]),
            ]
            fh.write(",".join(fields) + "\n")


def records_to_detections(records: Sequence[MotRecord], images=None) -> List[Detection]:
    """Detections from records, optionally attaching one image per record."""
    if images is not None and len(images) != len(records):
        raise ValueError(f"{len(images)} images for {len(records)} records")
    return [
        Detection(
            frame=rec.frame,
            box=rec.box,
            score=rec.conf,
            image=None if images is None else np.asarray(images[i], dtype=float),
        )
        for i, rec in enumerate(records)
    ]


def save_patches(path, images):
    """Store rendered patches losslessly as a single float array."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 4:
        raise ValueError(f"expected (n, channels, h, w) patches, got {images.shape}")
    np.savez_compressed(path, patches=images)


def load_patches(path) -> np.ndarray:
    with np.load(path) as blob:
        if "patches" not in blob:
            raise ValueError(f"{path}: missing 'patches' array")
        return blob["patches"]
