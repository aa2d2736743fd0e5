"""psh.coords

Image coordinates.

Convention used everywhere in pyseqhand: the origin is the centre of the top-left pixel,
x grows to the right, y grows downwards, units are pixels. Pixel (i, j) (column i, row j)
covers [i - 0.5, i + 0.5) x [j - 0.5, j + 0.5), so a continuous point maps to the pixel
floor(x + 0.5), floor(y + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

# the detector-box enlargement used to crop hands for downstream networks
CROP_SCALE = 2.2


def to_pixel(points: ArrayLike) -> NDArray[np.int64]:
    """(N, 2) continuous image points -> (N, 2) integer pixel indices (column, row)"""
    points = np.asarray(points, dtype=np.float64)
    return np.floor(points + 0.5).astype(np.int64)


def in_frame(pixels: ArrayLike, width: int, height: int) -> NDArray[np.bool_]:
    pixels = np.asarray(pixels)
    return (pixels[:, 0] >= 0) & (pixels[:, 0] < width) & (pixels[:, 1] >= 0) & (pixels[:, 1] < height)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in continuous image coordinates"""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"Box corners out of order: {self}")

    @classmethod
    def coerce(cls, obj: Box | Sequence[float]) -> Box:
        if isinstance(obj, cls):
            return obj
        assert len(obj) == 4, "Box should be a sequence of 4 numbers (x0, y0, x1, y1)"
        return cls(*(float(v) for v in obj))

    @classmethod
    def around(cls, points: ArrayLike) -> Box:
        """Tight box around (N, 2) points"""
        points = np.asarray(points, dtype=np.float64)
        (x0, y0), (x1, y1) = points.min(axis=0), points.max(axis=0)
        return cls(float(x0), float(y0), float(x1), float(y1))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    @property
    def long_edge(self) -> float:
        return max(self.width, self.height)


def crop_square(box: Box | Sequence[float], scale: float = CROP_SCALE) -> Box:
    """Square of side scale * long edge, centred on the box"""
    box = Box.coerce(box)
    cx, cy = box.center
    half = scale * box.long_edge / 2
    return Box(cx - half, cy - half, cx + half, cy + half)
