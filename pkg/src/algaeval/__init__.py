"""Evaluation, benchmarking and baseline inference for algae detectors."""

__version__ = "0.1.0"

from .geometry import BoundingBox, ImageSize, Space, clamp_to_image, denormalize, iou, normalize
from .dataset import DatasetManifest, LabelMap, load_manifest, split
from .detections import Detection, DetectionBatch
from .metrics import average_precision, evaluate, match_detections, pr_curve

__all__ = [
    "BoundingBox",
    "DatasetManifest",
    "Detection",
    "DetectionBatch",
    "ImageSize",
    "LabelMap",
    "Space",
    "average_precision",
    "clamp_to_image",
    "denormalize",
    "evaluate",
    "iou",
    "load_manifest",
    "match_detections",
    "normalize",
    "pr_curve",
    "split",
]
