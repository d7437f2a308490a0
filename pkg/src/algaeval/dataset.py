"""Annotated datasets: label maps, manifests, train/val/test splits, augmentation."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import jsonio
from .errors import ManifestError, RatioError, ValidationError
from .geometry import BoundingBox, ImageSize, Space
from .imageio import check_rgb
from .kernels import hsv_to_rgb, rgb_to_hsv

# ------------------------------------------------------------------ label map


@dataclass(frozen=True)
class LabelMap:
    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        names = [n for _, n in self.entries]
        for i, n in self.entries:
            if isinstance(i, bool) or not isinstance(i, int) or i < 1:
                raise ValidationError(f"label id must be a positive integer, got {i!r}")
            if not isinstance(n, str) or not n.strip():
                raise ValidationError(f"label {i} has an empty name")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate label ids in label map: {sorted(_dupes(ids))}")
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate label names in label map: {sorted(_dupes(names))}")

    @classmethod
    def default(cls) -> LabelMap:
        return cls(((1, "algae"),))

    @classmethod
    def parse_text(cls, text: str) -> LabelMap:
        """Parse the ``id:name`` per-line form. Blank lines and ``#`` comments are skipped."""
        entries = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, name = line.partition(":")
            if not sep:
                raise ValidationError("label map line must be 'id:name'", where=f"line {lineno}")
            try:
                ident = int(key.strip())
            except ValueError:
                raise ValidationError(f"label id {key.strip()!r} is not an integer", where=f"line {lineno}") from None
            entries.append((ident, name.strip()))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path) -> LabelMap:
        """Read a label map file, either ``id:name`` text or the manifest's JSON list."""
        text = Path(path).read_text(encoding="utf-8")
        if text.lstrip().startswith("["):
            return _label_map_from_json(jsonio.loads(text, ValidationError, "label map"), ValidationError)
        return cls.parse_text(text)

    def to_text(self) -> str:
        return "".join(f"{i}:{n}\n" for i, n in self.entries)

    def to_json(self) -> list:
        return [{"id": i, "name": n} for i, n in self.entries]

    @property
    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    def name_of(self, label_id: int) -> str:
        for i, n in self.entries:
            if i == label_id:
                return n
        return str(label_id)

    def __contains__(self, label_id) -> bool:
        return any(i == label_id for i, _ in self.entries)


def _dupes(values):
    seen, dup = set(), set()
    for v in values:
        (dup if v in seen else seen).add(v)
    return dup


def _label_map_from_json(obj, err, where="label_map"):
    if isinstance(obj, str):
        try:
            return LabelMap.parse_text(obj)
        except ValidationError as exc:
            raise err(str(exc), where=where) from None
    if not isinstance(obj, list):
        raise err("label_map must be a list of {id, name} objects or 'id:name' text", where=where)
    entries = []
    for k, item in enumerate(obj):
        if not isinstance(item, dict) or set(item) != {"id", "name"}:
            raise err("label map entry must have exactly the keys 'id' and 'name'", where=f"{where}[{k}]")
        entries.append((item["id"], item["name"]))
    try:
        return LabelMap(tuple(entries))
    except ValidationError as exc:
        raise err(str(exc), where=where) from None


# ------------------------------------------------------------------ manifest


@dataclass(frozen=True)
class GroundTruthBox:
    label_id: int
    box: BoundingBox


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    path: str
    size: ImageSize
    ground_truth: tuple[GroundTruthBox, ...] = ()


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[ImageEntry, ...]
    label_map: LabelMap
    base_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        seen = set()
        for entry in self.images:
            if entry.image_id in seen:
                raise ManifestError("duplicate image id", image_id=entry.image_id)
            seen.add(entry.image_id)
            for gt in entry.ground_truth:
                if gt.label_id not in self.label_map:
                    raise ManifestError(f"unknown label_id {gt.label_id}", image_id=entry.image_id)
                if gt.box.space is not Space.PIXEL or not gt.box.fits(entry.size):
                    raise ManifestError(
                        f"box {gt.box.as_tuple()} outside image bounds {entry.size.width}x{entry.size.height}",
                        image_id=entry.image_id,
                    )

    @property
    def ids(self) -> list[str]:
        return [e.image_id for e in self.images]

    def get(self, image_id: str) -> ImageEntry:
        for e in self.images:
            if e.image_id == image_id:
                return e
        raise KeyError(image_id)

    def image_path(self, entry: ImageEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def subset(self, image_ids) -> DatasetManifest:
        keep = set(image_ids)
        return DatasetManifest(tuple(e for e in self.images if e.image_id in keep), self.label_map, self.base_dir)


_TOP_KEYS = {"label_map", "images"}
_IMAGE_KEYS = {"id", "path", "width", "height", "boxes"}
_BOX_KEYS = {"label_id", "x_min", "y_min", "x_max", "y_max"}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def parse_manifest(obj, base_dir=None) -> DatasetManifest:
    """Validate a decoded manifest document. Out-of-bounds boxes are rejected, never clamped."""
    if not isinstance(obj, dict):
        raise ManifestError("manifest must be a JSON object", where="$")
    unknown = sorted(set(obj) - _TOP_KEYS)
    if unknown:
        raise ManifestError(f"unknown top-level keys: {', '.join(unknown)}", where="$")
    missing = sorted(_TOP_KEYS - set(obj))
    if missing:
        raise ManifestError(f"missing top-level keys: {', '.join(missing)}", where="$")
    label_map = _label_map_from_json(obj["label_map"], ManifestError)
    if not isinstance(obj["images"], list):
        raise ManifestError("images must be a list", where="images")

    images = []
    for k, img in enumerate(obj["images"]):
        where = f"images[{k}]"
        if not isinstance(img, dict):
            raise ManifestError("image entry must be an object", where=where)
        image_id = img.get("id")
        if not isinstance(image_id, str) or not image_id:
            raise ManifestError("image id must be a non-empty string", where=f"{where}.id")
        bad = sorted(set(img) ^ _IMAGE_KEYS)
        if bad:
            raise ManifestError(f"image keys must be exactly {sorted(_IMAGE_KEYS)}; offending: {bad}",
                                image_id=image_id, where=where)
        if not isinstance(img["path"], str):
            raise ManifestError("path must be a string", image_id=image_id, where=f"{where}.path")
        for dim in ("width", "height"):
            if not _is_int(img[dim]) or img[dim] < 1:
                raise ManifestError(f"{dim} must be a positive integer", image_id=image_id, where=f"{where}.{dim}")
        size = ImageSize(img["width"], img["height"])
        if not isinstance(img["boxes"], list):
            raise ManifestError("boxes must be a list", image_id=image_id, where=f"{where}.boxes")
        gts = []
        for j, b in enumerate(img["boxes"]):
            bw = f"{where}.boxes[{j}]"
            if not isinstance(b, dict) or set(b) != _BOX_KEYS:
                raise ManifestError(f"box must have exactly the keys {sorted(_BOX_KEYS)}", image_id=image_id, where=bw)
            if not _is_int(b["label_id"]):
                raise ManifestError("label_id must be an integer", image_id=image_id, where=f"{bw}.label_id")
            for c in ("x_min", "y_min", "x_max", "y_max"):
                if not _is_num(b[c]):
                    raise ManifestError(f"{c} must be a finite number", image_id=image_id, where=f"{bw}.{c}")
            if b["x_min"] > b["x_max"] or b["y_min"] > b["y_max"]:
                raise ManifestError("box corners out of order", image_id=image_id, where=bw)
            box = BoundingBox(float(b["x_min"]), float(b["y_min"]), float(b["x_max"]), float(b["y_max"]), Space.PIXEL)
            if not box.fits(size):
                raise ManifestError(
                    f"box {box.as_tuple()} outside image bounds {size.width}x{size.height}",
                    image_id=image_id, where=bw,
                )
            if b["label_id"] not in label_map:
                raise ManifestError(f"unknown label_id {b['label_id']}", image_id=image_id, where=f"{bw}.label_id")
            gts.append(GroundTruthBox(b["label_id"], box))
        images.append(ImageEntry(image_id, img["path"], size, tuple(gts)))
    return DatasetManifest(tuple(images), label_map, None if base_dir is None else Path(base_dir))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(jsonio.read_json(path, ManifestError, "manifest"), base_dir=path.parent)


def manifest_to_json(manifest: DatasetManifest) -> dict:
    return {
        "label_map": manifest.label_map.to_json(),
        "images": [
            {
                "id": e.image_id,
                "path": e.path,
                "width": e.size.width,
                "height": e.size.height,
                "boxes": [
                    {
                        "label_id": g.label_id,
                        "x_min": jsonio.num(g.box.x_min),
                        "y_min": jsonio.num(g.box.y_min),
                        "x_max": jsonio.num(g.box.x_max),
                        "y_max": jsonio.num(g.box.y_max),
                    }
                    for g in e.ground_truth
                ],
            }
            for e in manifest.images
        ],
    }


def save_manifest(manifest: DatasetManifest, path) -> None:
    jsonio.write_json(path, manifest_to_json(manifest))


# ------------------------------------------------------------------ splits


class Subset(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


SUBSET_ORDER = (Subset.TRAIN, Subset.VAL, Subset.TEST)


@dataclass(frozen=True)
class SplitAssignment:
    seed: int
    assignments: dict

    def members(self, subset) -> list[str]:
        subset = Subset(subset)
        return [k for k, v in self.assignments.items() if v is subset]

    def counts(self) -> tuple[int, int, int]:
        return tuple(len(self.members(s)) for s in SUBSET_ORDER)

    def to_json(self) -> dict:
        return {"seed": self.seed, "assignments": {k: self.assignments[k].value for k in sorted(self.assignments)}}


def _as_fraction(r) -> Fraction:
    # 0.7 → 7/10 rather than its binary expansion, so quotas like 0.7 * 100 are exact
    return Fraction(r).limit_denominator(10**9)


def apportion(total: int, ratios) -> tuple[int, ...]:
    """Largest-remainder apportionment; remainder ties go to the earlier slot."""
    ratios = list(ratios)
    if any(r < 0 for r in ratios):
        raise RatioError(f"ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioError(f"ratios must sum to 1 (got {sum(ratios):.12g})")
    quotas = [_as_fraction(r) * total for r in ratios]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return tuple(counts)


def split(manifest: DatasetManifest, ratios=(0.7, 0.2, 0.1), seed: int = 0) -> SplitAssignment:
    """Seeded random train/val/test assignment.

    Image ids are sorted before shuffling so the result does not depend on
    manifest order.
    """
    if len(ratios) != 3:
        raise RatioError("exactly three ratios (train, val, test) are required")
    counts = apportion(len(manifest.images), ratios)
    ids = sorted(manifest.ids)
    random.Random(seed).shuffle(ids)
    assignments = {}
    start = 0
    for subset, n in zip(SUBSET_ORDER, counts):
        for image_id in ids[start : start + n]:
            assignments[image_id] = subset
        start += n
    return SplitAssignment(seed, {k: assignments[k] for k in sorted(assignments)})


def parse_split(obj) -> SplitAssignment:
    if not isinstance(obj, dict) or set(obj) != {"seed", "assignments"}:
        raise ValidationError("split file must have exactly the keys 'seed' and 'assignments'", where="$")
    if not _is_int(obj["seed"]):
        raise ValidationError("seed must be an integer", where="seed")
    if not isinstance(obj["assignments"], dict):
        raise ValidationError("assignments must be an object", where="assignments")
    out = {}
    for k, v in obj["assignments"].items():
        try:
            out[k] = Subset(v)
        except ValueError:
            raise ValidationError(f"subset must be train, val or test, got {v!r}", where=f"assignments.{k}") from None
    return SplitAssignment(obj["seed"], out)


def load_split(path) -> SplitAssignment:
    return parse_split(jsonio.read_json(path, ValidationError, "split file"))


# ------------------------------------------------------------------ augmentation


def _range(v):
    if isinstance(v, (int, float)):
        return (float(v), float(v))
    lo, hi = v
    return (float(lo), float(hi))


@dataclass(frozen=True)
class AugmentationSpec:
    """Photometric jitter ranges; each parameter is drawn uniformly from its range."""

    brightness_delta: tuple[float, float] = (0.0, 0.0)
    contrast_factor: tuple[float, float] = (1.0, 1.0)
    saturation_factor: tuple[float, float] = (1.0, 1.0)
    hue_shift_degrees: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("brightness_delta", "contrast_factor", "saturation_factor", "hue_shift_degrees"):
            lo, hi = _range(getattr(self, name))
            object.__setattr__(self, name, (lo, hi))
            if lo > hi:
                raise ValidationError(f"{name} range is reversed: ({lo}, {hi})")
        if self.contrast_factor[0] <= 0 or self.saturation_factor[0] <= 0:
            raise ValidationError("contrast and saturation factors must be strictly positive")
        if self.hue_shift_degrees[0] < -180 or self.hue_shift_degrees[1] > 180:
            raise ValidationError("hue shift must lie in [-180, 180] degrees")

    def sample(self) -> dict:
        """The concrete parameters :func:`augment` applies for this seed."""
        rng = np.random.default_rng(self.seed)
        return {
            "brightness": float(rng.uniform(*self.brightness_delta)),
            "contrast": float(rng.uniform(*self.contrast_factor)),
            "saturation": float(rng.uniform(*self.saturation_factor)),
            "hue": float(rng.uniform(*self.hue_shift_degrees)),
        }


def augment(pixels, spec: AugmentationSpec) -> np.ndarray:
    """Apply brightness, contrast (about 128), saturation and hue jitter in that order."""
    pixels = check_rgb(pixels)
    p = spec.sample()
    x = pixels.astype(np.float64)
    if p["brightness"] != 0.0:
        x = np.clip(x + p["brightness"], 0.0, 255.0)
    if p["contrast"] != 1.0:
        x = np.clip((x - 128.0) * p["contrast"] + 128.0, 0.0, 255.0)
    if p["saturation"] != 1.0 or p["hue"] != 0.0:
        h, s, v = rgb_to_hsv(x)
        s = np.clip(s * p["saturation"], 0.0, 1.0)
        h = np.mod(h + p["hue"], 360.0)
        x = np.clip(hsv_to_rgb(h, s, v), 0.0, 255.0)
    return np.rint(x).astype(np.uint8)
