"""Colour-heuristic algae detector: green mask, 4-connected blobs, one box per blob.

No learned model; it exists so the evaluation pipeline can run end to end.
Thresholds are engineering defaults, not measured algae colours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detections import DetectionBatch
from .errors import ValidationError
from .geometry import BoundingBox, Space
from .imageio import check_rgb
from .kernels import color_mask, component_stats, label4

ALGAE_LABEL_ID = 1
DEFAULT_MIN_AREA_FRACTION = 0.001


@dataclass(frozen=True)
class ColorThresholds:
    hue_range: tuple[float, float] = (70.0, 170.0)
    saturation_min: float = 0.25
    value_min: float = 0.15

    def __post_init__(self):
        lo, hi = self.hue_range
        if not (0.0 <= lo < 360.0 and 0.0 <= hi < 360.0):
            raise ValidationError(f"hue bounds must lie in [0, 360), got {self.hue_range}")
        for name in ("saturation_min", "value_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class Blob:
    pixel_count: int
    box: BoundingBox  # pixel space, continuous corners

    @property
    def density(self) -> float:
        return self.pixel_count / self.box.area


def segment(pixels, thresholds: ColorThresholds = ColorThresholds()) -> np.ndarray:
    """Boolean mask of pixels inside the hue/saturation/value window (hue wraps at 360)."""
    pixels = check_rgb(pixels)
    lo, hi = thresholds.hue_range
    return color_mask(pixels, lo, hi, thresholds.saturation_min, thresholds.value_min)


def connected_components(mask, min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION) -> list[Blob]:
    """4-connected blobs, largest first; blobs under ``min_area_fraction`` of the image are dropped."""
    if not 0.0 <= min_area_fraction < 1.0:
        raise ValidationError(f"min_area_fraction must be in [0, 1), got {min_area_fraction}")
    mask = np.asarray(mask, dtype=bool)
    labels, n = label4(mask)
    if n == 0:
        return []
    count, r0, r1, c0, c1 = component_stats(labels, n)
    min_pixels = min_area_fraction * mask.size
    # stable sort keeps raster order among equal sizes
    order = np.argsort(-count, kind="stable")
    return [
        Blob(int(count[k]), BoundingBox(float(c0[k]), float(r0[k]), float(c1[k] + 1), float(r1[k] + 1), Space.PIXEL))
        for k in order
        if count[k] >= min_pixels
    ]


def detect(
    pixels,
    thresholds: ColorThresholds = ColorThresholds(),
    min_area_fraction: float = DEFAULT_MIN_AREA_FRACTION,
    image_id: str = "",
) -> DetectionBatch:
    """Run the baseline on one image; score is each blob's fill density."""
    pixels = check_rgb(pixels)
    h, w = pixels.shape[:2]
    blobs = connected_components(segment(pixels, thresholds), min_area_fraction)
    boxes = tuple(
        (b.box.y_min / h, b.box.x_min / w, b.box.y_max / h, b.box.x_max / w) for b in blobs
    )
    return DetectionBatch(
        image_id,
        boxes,
        tuple(b.density for b in blobs),
        (ALGAE_LABEL_ID,) * len(blobs),
        len(blobs),
    )
