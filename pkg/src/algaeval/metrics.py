"""Detection matching, precision-recall curves, AP/mAP and image-level metrics."""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import jsonio
from .dataset import DatasetManifest, ImageEntry
from .detections import Detection, DetectionBatch
from .errors import ValidationError
from .geometry import clamp_to_image, denormalize, iou

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_SCORE_THRESHOLD = 0.5


class Outcome(enum.Enum):
    TRUE_POSITIVE = "tp"
    FALSE_POSITIVE_DUPLICATE = "fp_duplicate"
    FALSE_POSITIVE_NO_MATCH = "fp_no_match"


class APMethod(str, enum.Enum):
    CONTINUOUS = "continuous"
    ELEVEN_POINT = "eleven-point"


@dataclass(frozen=True)
class MatchedDetection:
    detection: Detection
    outcome: Outcome
    matched_gt: int | None  # index into the image's ground_truth
    iou: float
    index: int  # position in the caller's detection list

    @property
    def is_tp(self) -> bool:
        return self.outcome is Outcome.TRUE_POSITIVE


@dataclass(frozen=True)
class MatchResult:
    image_id: str
    records: tuple[MatchedDetection, ...]
    positives: dict = field(default_factory=dict)  # label_id -> ground-truth count

    @property
    def true_positives(self) -> int:
        return sum(r.is_tp for r in self.records)


def match_detections(
    detections, entry: ImageEntry, iou_threshold: float = DEFAULT_IOU_THRESHOLD, paper_compat: bool = False
) -> MatchResult:
    """Greedy matching of one image's detections against its ground truth.

    Detections are visited by descending score (ties by input position). Each
    one looks up its best-IoU ground truth of the same class: if that IoU
    exceeds the threshold the detection is a true positive, unless an earlier
    detection already claimed that ground truth, in which case it is a
    duplicate.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    detections = list(detections)
    for d in detections:
        if d.image_id != entry.image_id:
            raise ValidationError(f"detection for image {d.image_id!r} passed with image {entry.image_id!r}")
    gts = entry.ground_truth
    taken = [False] * len(gts)
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    records = []
    for i in order:
        d = detections[i]
        box = clamp_to_image(denormalize(d.box, entry.size, paper_compat), entry.size).box
        best, best_iou = None, 0.0
        for g, gt in enumerate(gts):
            if gt.label_id != d.label_id:
                continue
            v = iou(box, gt.box)
            if best is None or v > best_iou:
                best, best_iou = g, v
        if best is not None and best_iou > iou_threshold:
            if taken[best]:
                outcome = Outcome.FALSE_POSITIVE_DUPLICATE
            else:
                taken[best] = True
                outcome = Outcome.TRUE_POSITIVE
            records.append(MatchedDetection(d, outcome, best, best_iou, i))
        else:
            records.append(MatchedDetection(d, Outcome.FALSE_POSITIVE_NO_MATCH, None, best_iou, i))
    return MatchResult(entry.image_id, tuple(records), dict(Counter(g.label_id for g in gts)))


@dataclass(frozen=True)
class PRCurve:
    label_id: int
    recall: tuple[float, ...]
    precision: tuple[float, ...]
    scores: tuple[float, ...]
    positives_total: int

    @property
    def empty_positives(self) -> bool:
        """No ground truth for this class: recall is undefined and AP is taken as 0."""
        return self.positives_total == 0

    def __len__(self):
        return len(self.recall)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "score", "recall", "precision"])
        for k, (s, r, p) in enumerate(zip(self.scores, self.recall, self.precision), 1):
            w.writerow([k, repr(s), repr(r), repr(p)])
        return buf.getvalue()


def pr_curve(results, label_id: int) -> PRCurve:
    """Pool one class's matched detections over all images into a PR curve.

    ``results`` must cover every evaluated image, including those without
    detections, so the ground-truth total is complete.
    """
    results = list(results)
    positives = sum(r.positives.get(label_id, 0) for r in results)
    pooled = [
        (rec.detection.score, r.image_id, rec.index, rec.is_tp)
        for r in results
        for rec in r.records
        if rec.detection.label_id == label_id
    ]
    pooled.sort(key=lambda t: (-t[0], t[1], t[2]))
    recall, precision, scores = [], [], []
    tp = 0
    for k, (score, _, _, is_tp) in enumerate(pooled, 1):
        tp += is_tp
        precision.append(tp / k)
        recall.append(tp / positives if positives else 0.0)
        scores.append(score)
    return PRCurve(label_id, tuple(recall), tuple(precision), tuple(scores), positives)


def average_precision(curve: PRCurve, method=APMethod.CONTINUOUS) -> float:
    """Area under the monotone precision envelope, or its 11-point sampling."""
    method = APMethod(method)
    if curve.empty_positives or len(curve) == 0:
        return 0.0
    rec = np.asarray(curve.recall, dtype=np.float64)
    prec = np.asarray(curve.precision, dtype=np.float64)
    envelope = np.maximum.accumulate(prec[::-1])[::-1]
    if method is APMethod.CONTINUOUS:
        # recall moves in steps of 1/P; summing whole steps and dividing once
        # keeps a perfect curve at exactly 1.0
        p = curve.positives_total
        steps = np.diff(np.rint(rec * p), prepend=0.0)
        return math.fsum(steps * envelope) / p
    total = 0.0
    for t in range(11):
        reach = rec >= t / 10.0
        total += float(envelope[reach].max()) if reach.any() else 0.0
    return total / 11.0


def mean_average_precision(ap_by_class, positives_by_class) -> float:
    """Unweighted mean of AP over classes that have at least one ground-truth box."""
    evaluable = [c for c, ap in ap_by_class.items() if positives_by_class.get(c, 0) > 0]
    if not evaluable:
        raise ValidationError("no class has ground truth; mAP is undefined")
    return sum(ap_by_class[c] for c in evaluable) / len(evaluable)


# ------------------------------------------------------------------ image-level classification


def classify_images(batches, score_threshold: float = DEFAULT_SCORE_THRESHOLD) -> dict[str, bool]:
    """An image is positive iff one of its detections scores strictly above the threshold."""
    if not 0.0 <= score_threshold <= 1.0:
        raise ValidationError(f"score_threshold must be in [0, 1], got {score_threshold}")
    out = {}
    for b in batches:
        scores = b.scores[: b.num_detections]
        out[b.image_id] = out.get(b.image_id, False) or any(s > score_threshold for s in scores)
    return out


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, truth: dict, predicted: dict) -> ConfusionCounts:
        c = Counter((bool(truth[k]), bool(predicted.get(k, False))) for k in truth)
        return cls(tp=c[True, True], fp=c[False, True], tn=c[False, False], fn=c[True, False])


@dataclass(frozen=True)
class ClassificationMetrics:
    """Exact ratios; ``None`` marks an undefined ratio (never reported as 0)."""

    accuracy: Fraction | None
    precision: Fraction | None
    recall: Fraction | None

    def percents(self) -> dict[str, str]:
        return {k: format_percent(getattr(self, k)) for k in ("accuracy", "precision", "recall")}


def classification_metrics(counts: ConfusionCounts) -> ClassificationMetrics:
    def ratio(num, den):
        return Fraction(num, den) if den > 0 else None

    return ClassificationMetrics(
        accuracy=ratio(counts.tp + counts.tn, counts.total),
        precision=ratio(counts.tp, counts.tp + counts.fp),
        recall=ratio(counts.tp, counts.tp + counts.fn),
    )


def format_percent(value) -> str:
    """Percentage truncated (not rounded) to two decimals; ``n/a`` for ``None``.

    25/52 prints as 48.07.
    """
    if value is None:
        return "n/a"
    hundredths = math.floor(Fraction(value) * 10000)
    return f"{hundredths // 100}.{hundredths % 100:02d}"


# ------------------------------------------------------------------ full evaluation


@dataclass
class ClassAP:
    label_id: int
    name: str
    continuous: float
    eleven_point: float
    positives: int
    detections: int


@dataclass
class EvalReport:
    per_class: dict  # label_id -> ClassAP
    map_continuous: float | None
    map_eleven_point: float | None
    iou_threshold: float
    score_threshold: float
    counts: ConfusionCounts
    ap_method: APMethod = APMethod.CONTINUOUS
    curves: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def classification(self) -> ClassificationMetrics:
        return classification_metrics(self.counts)

    @property
    def map(self) -> float | None:
        return self.map_continuous if self.ap_method is APMethod.CONTINUOUS else self.map_eleven_point

    def to_json(self) -> dict:
        cm = self.classification

        def f(x):
            return None if x is None else jsonio.num(float(x))

        return {
            "map_continuous": f(self.map_continuous),
            "map_eleven_point": f(self.map_eleven_point),
            "per_class_ap": {
                str(c.label_id): {
                    "name": c.name,
                    "continuous": f(c.continuous),
                    "eleven_point": f(c.eleven_point),
                    "positives": c.positives,
                    "detections": c.detections,
                }
                for c in self.per_class.values()
            },
            "ap_method": self.ap_method.value,
            "iou_threshold": jsonio.num(self.iou_threshold),
            "score_threshold": jsonio.num(self.score_threshold),
            "accuracy": f(cm.accuracy),
            "precision": f(cm.precision),
            "recall": f(cm.recall),
            "counts": {"tp": self.counts.tp, "fp": self.counts.fp, "tn": self.counts.tn, "fn": self.counts.fn},
        }


_REPORT_KEYS = {
    "map_continuous", "map_eleven_point", "per_class_ap", "ap_method", "iou_threshold",
    "score_threshold", "accuracy", "precision", "recall", "counts",
}


def parse_report(obj) -> EvalReport:
    """Rebuild an :class:`EvalReport` from its JSON form (curves are not stored)."""
    if not isinstance(obj, dict) or set(obj) != _REPORT_KEYS:
        raise ValidationError(f"report must have exactly the keys {sorted(_REPORT_KEYS)}", where="$")
    counts = obj["counts"]
    if not isinstance(counts, dict) or set(counts) != {"tp", "fp", "tn", "fn"}:
        raise ValidationError("counts must have exactly tp, fp, tn, fn", where="counts")
    per_class = {}
    for key, c in obj["per_class_ap"].items():
        per_class[int(key)] = ClassAP(int(key), c["name"], c["continuous"], c["eleven_point"],
                                      c["positives"], c["detections"])
    return EvalReport(
        per_class=per_class,
        map_continuous=obj["map_continuous"],
        map_eleven_point=obj["map_eleven_point"],
        iou_threshold=obj["iou_threshold"],
        score_threshold=obj["score_threshold"],
        counts=ConfusionCounts(**counts),
        ap_method=APMethod(obj["ap_method"]),
    )


def evaluate(
    manifest: DatasetManifest,
    detections,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    ap_method=APMethod.CONTINUOUS,
    paper_compat: bool = False,
    allow_unknown: bool = False,
) -> EvalReport:
    """Evaluate detections against every image in ``manifest``.

    Detections for image ids absent from the manifest raise, unless
    ``allow_unknown`` is set (used when the manifest was narrowed to a split).
    An image counts as a positive for classification when it has at least one
    ground-truth box.
    """
    by_image = defaultdict(list)
    known = set(manifest.ids)
    for d in detections:
        if d.image_id not in known:
            if allow_unknown:
                continue
            raise ValidationError(f"detection references unknown image {d.image_id!r}")
        by_image[d.image_id].append(d)

    results = [match_detections(by_image[e.image_id], e, iou_threshold, paper_compat) for e in manifest.images]

    labels = list(manifest.label_map.ids)
    for d in detections:
        if d.image_id in known and d.label_id not in labels:
            labels.append(d.label_id)
    per_class, curves = {}, {}
    for label in labels:
        curve = pr_curve(results, label)
        curves[label] = curve
        per_class[label] = ClassAP(
            label,
            manifest.label_map.name_of(label),
            average_precision(curve, APMethod.CONTINUOUS),
            average_precision(curve, APMethod.ELEVEN_POINT),
            curve.positives_total,
            len(curve),
        )
    positives = {c: v.positives for c, v in per_class.items()}
    map_c = mean_average_precision({c: v.continuous for c, v in per_class.items()}, positives)
    map_e = mean_average_precision({c: v.eleven_point for c, v in per_class.items()}, positives)

    truth = {e.image_id: bool(e.ground_truth) for e in manifest.images}
    batches = [DetectionBatch.from_detections(e.image_id, by_image[e.image_id]) for e in manifest.images]
    predicted = classify_images(batches, score_threshold)
    return EvalReport(
        per_class=per_class,
        map_continuous=map_c,
        map_eleven_point=map_e,
        iou_threshold=iou_threshold,
        score_threshold=score_threshold,
        counts=ConfusionCounts.from_predictions(truth, predicted),
        ap_method=APMethod(ap_method),
        curves=curves,
    )
