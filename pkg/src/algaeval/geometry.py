"""Axis-aligned boxes, coordinate-space conversion and overlap.

Boxes are stored as ``(x_min, y_min, x_max, y_max)`` in continuous
coordinates: a box covering pixel columns 10..49 has ``x_min=10`` and
``x_max=50``. Areas carry no +1 pixel correction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

from .errors import CoordinateSpaceMismatch, ValidationError


class Space(enum.Enum):
    NORMALIZED = "normalized"
    PIXEL = "pixel"


@dataclass(frozen=True)
class ImageSize:
    width: int
    height: int

    def __post_init__(self):
        for name in ("width", "height"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValidationError(f"image {name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    space: Space = Space.PIXEL

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValidationError(f"box corners out of order: {self.as_tuple()}")
        if self.space is Space.NORMALIZED:
            if not all(0.0 <= v <= 1.0 for v in self.as_tuple()):
                raise ValidationError(f"normalized box outside the unit square: {self.as_tuple()}")

    @classmethod
    def from_yxyx(cls, values, space=Space.NORMALIZED) -> BoundingBox:
        """Build from the wire order ``(y_min, x_min, y_max, x_max)``."""
        y0, x0, y1, x1 = (float(v) for v in values)
        return cls(x0, y0, x1, y1, space)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def to_yxyx(self) -> list[float]:
        return [self.y_min, self.x_min, self.y_max, self.x_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def is_degenerate(self) -> bool:
        return self.area <= 0.0

    def translate(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy, self.space)

    def fits(self, size: ImageSize) -> bool:
        """True when a pixel box lies inside ``[0, width] x [0, height]``."""
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max <= size.width and self.y_max <= size.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes in the same space.

    Degenerate (zero-area) boxes score 0 against everything, themselves
    included.
    """
    if a.space is not b.space:
        raise CoordinateSpaceMismatch(f"cannot compare {a.space.value} box with {b.space.value} box")
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if a.is_degenerate or b.is_degenerate:
        return 0.0
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def denormalize(box: BoundingBox, size: ImageSize, paper_compat: bool = False) -> BoundingBox:
    """Scale a normalized box to pixel coordinates.

    By default x scales by width and y by height. With ``paper_compat`` every
    coordinate is multiplied by the image width, which overshoots the bottom
    edge on landscape images; pass the result through :func:`clamp_to_image`.
    """
    if box.space is not Space.NORMALIZED:
        raise CoordinateSpaceMismatch("denormalize expects a normalized box")
    sx = float(size.width)
    sy = sx if paper_compat else float(size.height)
    return BoundingBox(box.x_min * sx, box.y_min * sy, box.x_max * sx, box.y_max * sy, Space.PIXEL)


def normalize(box: BoundingBox, size: ImageSize) -> BoundingBox:
    if box.space is not Space.PIXEL:
        raise CoordinateSpaceMismatch("normalize expects a pixel box")
    w, h = float(size.width), float(size.height)
    return BoundingBox(
        min(1.0, max(0.0, box.x_min / w)),
        min(1.0, max(0.0, box.y_min / h)),
        min(1.0, max(0.0, box.x_max / w)),
        min(1.0, max(0.0, box.y_max / h)),
        Space.NORMALIZED,
    )


class Clamped(NamedTuple):
    box: BoundingBox
    clipped: bool
    degenerate: bool


def clamp_to_image(box: BoundingBox, size: ImageSize) -> Clamped:
    """Clip a pixel box into the image; zero-area results are allowed but flagged."""
    if box.space is not Space.PIXEL:
        raise CoordinateSpaceMismatch("clamp_to_image expects a pixel box")
    w, h = float(size.width), float(size.height)
    out = BoundingBox(
        min(max(box.x_min, 0.0), w),
        min(max(box.y_min, 0.0), h),
        min(max(box.x_max, 0.0), w),
        min(max(box.y_max, 0.0), h),
        Space.PIXEL,
    )
    return Clamped(out, out.as_tuple() != box.as_tuple(), out.is_degenerate)
