"""Bounding boxes and mask overlap helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBoxError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with half-open pixel coordinates [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise DegenerateBoxError(f"empty or inverted box {self.as_tuple()}")
        if self.x0 < 0 or self.y0 < 0:
            raise DegenerateBoxError(f"box {self.as_tuple()} has negative origin")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def validate_within(self, height: int, width: int) -> None:
        if self.x1 > width or self.y1 > height:
            raise DegenerateBoxError(
                f"box {self.as_tuple()} exceeds image extent {(height, width)}"
            )

    def covers(self, height: int, width: int) -> bool:
        return self.x0 == 0 and self.y0 == 0 and self.x1 >= width and self.y1 >= height

    def as_mask(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        mask[self.y0 : self.y1, self.x0 : self.x1] = True
        return mask

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def dilated(self, margin: int, height: int, width: int) -> "BoundingBox":
        return BoundingBox(
            max(0, self.x0 - margin),
            max(0, self.y0 - margin),
            min(width, self.x1 + margin),
            min(height, self.y1 + margin),
        )


def box_from_list(values) -> BoundingBox:
    if len(values) != 4:
        raise DegenerateBoxError(f"box must be [x0, y0, x1, y1], got {values!r}")
    return BoundingBox(*values)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks (0.0 when both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


def tight_box(mask: np.ndarray) -> BoundingBox:
    """Smallest box containing every True pixel."""
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    if ys.size == 0:
        raise DegenerateBoxError("cannot bound an empty mask")
    return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
