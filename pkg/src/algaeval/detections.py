"""Detector output: single detections, per-frame batches and their file formats.

Boxes on the wire are normalized and in ``(y_min, x_min, y_max, x_max)``
order; internally they become :class:`~algaeval.geometry.BoundingBox`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import jsonio
from .errors import DetectionsFormatError, ProtocolError, ValidationError
from .geometry import BoundingBox, Space


@dataclass(frozen=True)
class Detection:
    image_id: str
    label_id: int
    score: float
    box: BoundingBox

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")
        if self.box.space is not Space.NORMALIZED:
            raise ValidationError("detection boxes must be normalized")


@dataclass(frozen=True)
class DetectionBatch:
    """One frame's output as four parallel arrays, already truncated to ``num_detections``."""

    image_id: str
    boxes: tuple[tuple[float, float, float, float], ...] = ()
    scores: tuple[float, ...] = ()
    classes: tuple[int, ...] = ()
    num_detections: int = 0

    def detections(self) -> list[Detection]:
        return [
            Detection(self.image_id, int(c), float(s), BoundingBox.from_yxyx(b))
            for b, s, c in zip(self.boxes, self.scores, self.classes)
        ]

    def to_wire(self) -> dict:
        return {
            "image_id": self.image_id,
            "boxes": [[jsonio.num(v) for v in b] for b in self.boxes],
            "scores": [jsonio.num(s) for s in self.scores],
            "classes": list(self.classes),
            "num_detections": self.num_detections,
        }

    @classmethod
    def from_detections(cls, image_id: str, dets) -> DetectionBatch:
        dets = list(dets)
        return cls(
            image_id,
            tuple(tuple(d.box.to_yxyx()) for d in dets),
            tuple(d.score for d in dets),
            tuple(d.label_id for d in dets),
            len(dets),
        )


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _wire_box(raw, where, err):
    if not isinstance(raw, list) or len(raw) != 4 or not all(_num(v) for v in raw):
        raise err("box must be a list of four numbers [y_min, x_min, y_max, x_max]", where=where)
    try:
        return BoundingBox.from_yxyx(raw)
    except ValidationError as exc:
        raise err(str(exc), where=where) from None


def parse_batch(obj, expected_image_id=None) -> DetectionBatch:
    """Validate one backend response and truncate its arrays to ``num_detections``."""

    def fail(msg, where=None):
        prefix = f"frame {expected_image_id!r}: " if expected_image_id is not None else ""
        return ProtocolError(prefix + msg + (f" (at {where})" if where else ""))

    if not isinstance(obj, dict):
        raise fail("response is not a JSON object")
    keys = {"image_id", "boxes", "scores", "classes", "num_detections"}
    missing = sorted(keys - set(obj))
    if missing:
        raise fail(f"response missing fields: {', '.join(missing)}")
    image_id = obj["image_id"]
    if not isinstance(image_id, str):
        raise fail("image_id must be a string")
    if expected_image_id is not None and image_id != expected_image_id:
        raise fail(f"response is for image {image_id!r}")
    boxes, scores, classes, n = obj["boxes"], obj["scores"], obj["classes"], obj["num_detections"]
    if not all(isinstance(a, list) for a in (boxes, scores, classes)):
        raise fail("boxes, scores and classes must be lists")
    if not (isinstance(n, int) and not isinstance(n, bool)) or n < 0:
        raise fail("num_detections must be a non-negative integer")
    if not len(boxes) == len(scores) == len(classes):
        raise fail(f"list lengths differ: boxes={len(boxes)} scores={len(scores)} classes={len(classes)}")
    if len(boxes) < n:
        raise fail(f"num_detections={n} exceeds list length {len(boxes)}")
    out_boxes, out_scores, out_classes = [], [], []
    for k in range(n):
        box = _wire_box(boxes[k], f"boxes[{k}]", fail)
        s = scores[k]
        if not _num(s) or not 0.0 <= s <= 1.0:
            raise fail(f"score {s!r} outside [0, 1]", f"scores[{k}]")
        c = classes[k]
        if isinstance(c, float) and c.is_integer():
            c = int(c)
        if not isinstance(c, int) or isinstance(c, bool) or c < 1:
            raise fail(f"class {c!r} is not a positive integer", f"classes[{k}]")
        out_boxes.append(tuple(box.to_yxyx()))
        out_scores.append(float(s))
        out_classes.append(c)
    return DetectionBatch(image_id, tuple(out_boxes), tuple(out_scores), tuple(out_classes), n)


# ------------------------------------------------------------------ detections file


def detections_to_json(detections) -> dict:
    return {
        "detections": [
            {
                "image_id": d.image_id,
                "label_id": d.label_id,
                "score": jsonio.num(d.score),
                "box": [jsonio.num(v) for v in d.box.to_yxyx()],
            }
            for d in detections
        ]
    }


def parse_detections(obj) -> list[Detection]:
    if not isinstance(obj, dict) or set(obj) != {"detections"}:
        raise DetectionsFormatError("detections file must be an object with the single key 'detections'", where="$")
    if not isinstance(obj["detections"], list):
        raise DetectionsFormatError("'detections' must be a list", where="detections")
    out = []
    for k, d in enumerate(obj["detections"]):
        where = f"detections[{k}]"
        if not isinstance(d, dict) or set(d) != {"image_id", "label_id", "score", "box"}:
            raise DetectionsFormatError("detection must have exactly image_id, label_id, score, box", where=where)
        if not isinstance(d["image_id"], str):
            raise DetectionsFormatError("image_id must be a string", where=f"{where}.image_id")
        if not isinstance(d["label_id"], int) or isinstance(d["label_id"], bool) or d["label_id"] < 1:
            raise DetectionsFormatError("label_id must be a positive integer", where=f"{where}.label_id")
        if not _num(d["score"]) or not 0.0 <= d["score"] <= 1.0:
            raise DetectionsFormatError("score must be a number in [0, 1]", where=f"{where}.score")
        box = _wire_box(d["box"], f"{where}.box", DetectionsFormatError)
        out.append(Detection(d["image_id"], d["label_id"], float(d["score"]), box))
    return out


def load_detections(path) -> list[Detection]:
    return parse_detections(jsonio.read_json(path, DetectionsFormatError, "detections file"))


def save_detections(detections, path) -> None:
    jsonio.write_json(path, detections_to_json(detections))
