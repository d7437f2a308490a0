from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from algaeval.dataset import DatasetManifest, GroundTruthBox, ImageEntry, LabelMap, load_manifest
from algaeval.detections import Detection, DetectionBatch, load_detections
from algaeval.errors import ValidationError
from algaeval.geometry import BoundingBox, ImageSize, Space
from algaeval.metrics import (
    APMethod,
    ConfusionCounts,
    Outcome,
    PRCurve,
    average_precision,
    classification_metrics,
    classify_images,
    evaluate,
    format_percent,
    match_detections,
    mean_average_precision,
    pr_curve,
)

from oracles import envelope_ap, greedy_outcomes

SIZE = ImageSize(100, 100)


def _entry(image_id, gts, label=1):
    return ImageEntry(image_id, f"{image_id}.ppm", SIZE,
                      tuple(GroundTruthBox(label, BoundingBox(*g, Space.PIXEL)) for g in gts))


def _det(image_id, score, box, label=1):
    # box given in pixels of a 100x100 image
    x0, y0, x1, y1 = (v / 100 for v in box)
    return Detection(image_id, label, score, BoundingBox(x0, y0, x1, y1, Space.NORMALIZED))


def _curve(recall, precision, positives=1):
    return PRCurve(1, tuple(recall), tuple(precision), tuple([0.5] * len(recall)), positives)


# ------------------------------------------------------------------ matching


def test_single_true_positive():
    r = match_detections([_det("a", 0.9, (10, 10, 50, 50))], _entry("a", [(10, 10, 50, 52)]))
    assert [m.outcome for m in r.records] == [Outcome.TRUE_POSITIVE]
    assert r.records[0].iou == pytest.approx(40 * 40 / (40 * 42))


def test_duplicate_after_true_positive():
    dets = [_det("a", 0.8, (11, 10, 50, 50)), _det("a", 0.9, (10, 10, 50, 50))]
    r = match_detections(dets, _entry("a", [(10, 10, 50, 50)]))
    assert [m.outcome for m in r.records] == [Outcome.TRUE_POSITIVE, Outcome.FALSE_POSITIVE_DUPLICATE]
    assert [m.detection.score for m in r.records] == [0.9, 0.8]
    assert r.records[1].matched_gt == 0


def test_no_ground_truth():
    r = match_detections([_det("a", 0.7, (0, 0, 10, 10))], _entry("a", []))
    assert r.records[0].outcome is Outcome.FALSE_POSITIVE_NO_MATCH


def test_threshold_is_strict():
    # IoU exactly 0.5: intersection 100, union 200
    gt = (0, 0, 20, 10)
    det = _det("a", 0.9, (0, 0, 20, 5))
    r = match_detections([det], _entry("a", [gt]), iou_threshold=0.5)
    assert r.records[0].iou == 0.5
    assert r.records[0].outcome is Outcome.FALSE_POSITIVE_NO_MATCH


def test_class_aware():
    r = match_detections([_det("a", 0.9, (10, 10, 50, 50), label=2)], _entry("a", [(10, 10, 50, 50)]))
    assert r.records[0].outcome is Outcome.FALSE_POSITIVE_NO_MATCH


def test_wrong_image_rejected():
    with pytest.raises(ValidationError):
        match_detections([_det("b", 0.9, (0, 0, 1, 1))], _entry("a", []))


def test_bad_iou_threshold():
    with pytest.raises(ValidationError):
        match_detections([], _entry("a", []), iou_threshold=0.0)


boxes100 = st.tuples(st.integers(0, 90), st.integers(0, 90), st.integers(1, 40), st.integers(1, 40)).map(
    lambda t: (t[0], t[1], min(100, t[0] + t[2]), min(100, t[1] + t[3]))
)


@settings(max_examples=150, deadline=None)
@given(st.lists(boxes100, max_size=5), st.lists(st.tuples(st.floats(0, 1), boxes100), max_size=12))
def test_each_gt_matched_at_most_once(gts, dets):
    r = match_detections([_det("a", s, b) for s, b in dets], _entry("a", gts))
    tps = [m.matched_gt for m in r.records if m.is_tp]
    assert len(tps) == len(set(tps)) <= len(gts)
    for m in r.records:
        if m.outcome is Outcome.FALSE_POSITIVE_DUPLICATE:
            assert m.matched_gt in tps


@settings(max_examples=150, deadline=None)
@given(
    st.lists(boxes100, max_size=5),
    st.lists(st.tuples(st.floats(0, 1), boxes100), max_size=12),
    st.floats(0.05, 0.95),
    st.floats(0.0, 0.5),
)
def test_raising_iou_threshold_never_adds_true_positives(gts, dets, t, bump):
    d = [_det("a", s, b) for s, b in dets]
    e = _entry("a", gts)
    low = match_detections(d, e, iou_threshold=t).true_positives
    high = match_detections(d, e, iou_threshold=min(1.0, t + bump)).true_positives
    assert high <= low


# ------------------------------------------------------------------ curves and AP


def _results(spec):
    """spec: {image_id: (gts, [(score, box), ...])} -> list of MatchResult."""
    return [match_detections([_det(i, s, b) for s, b in dets], _entry(i, gts)) for i, (gts, dets) in spec.items()]


def test_curve_single_tp():
    c = pr_curve(_results({"a": ([(10, 10, 50, 50)], [(0.9, (10, 10, 50, 50))])}), 1)
    assert list(zip(c.recall, c.precision)) == [(1.0, 1.0)]


def test_curve_tp_then_duplicate():
    c = pr_curve(_results({"a": ([(10, 10, 50, 50)], [(0.9, (10, 10, 50, 50)), (0.8, (10, 10, 50, 49))])}), 1)
    assert list(zip(c.recall, c.precision)) == [(1.0, 1.0), (1.0, 0.5)]


def test_curve_without_positives():
    c = pr_curve(_results({"a": ([], [(0.9, (0, 0, 5, 5)), (0.8, (5, 5, 9, 9)), (0.1, (1, 1, 2, 2))])}), 1)
    assert c.empty_positives and len(c) == 3
    assert average_precision(c) == 0.0


def test_curve_pools_images_and_breaks_ties_by_image_id():
    c = pr_curve(
        _results({
            "b": ([(10, 10, 50, 50)], [(0.5, (10, 10, 50, 50))]),
            "a": ([(10, 10, 50, 50)], [(0.5, (60, 60, 70, 70))]),
        }),
        1,
    )
    # image "a" (a false positive) ranks first among the tied scores
    assert c.precision == (0.0, 0.5)
    assert c.recall == (0.0, 0.5)


def test_ap_perfect():
    c = _curve([1.0], [1.0])
    assert average_precision(c, APMethod.CONTINUOUS) == 1.0
    assert average_precision(c, APMethod.ELEVEN_POINT) == 1.0


def test_ap_envelope_ignores_trailing_fp():
    assert average_precision(_curve([1.0, 1.0], [1.0, 0.5])) == 1.0


def test_golden_fixture_ap(data_dir):
    # ranked: .95 TP, .87 TP, .61 FP, .42 TP over 3 ground-truth boxes
    report = evaluate(load_manifest(data_dir / "manifest.json"), load_detections(data_dir / "detections.json"))
    assert report.per_class[1].continuous == pytest.approx(11 / 12, abs=1e-12)
    assert report.per_class[1].eleven_point == pytest.approx(10 / 11, abs=1e-12)
    assert report.counts == ConfusionCounts(tp=2, fp=1, tn=0, fn=0)
    curve = report.curves[1]
    assert curve.precision == pytest.approx((1.0, 1.0, 2 / 3, 0.75))
    assert curve.recall == pytest.approx((1 / 3, 2 / 3, 2 / 3, 1.0))


def test_random_instances_match_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        images = {}
        for k in range(rng.integers(1, 4)):
            gts = [tuple(_rand_box(rng)) for _ in range(rng.integers(0, 4))]
            dets = []
            for _ in range(rng.integers(0, 6)):
                if gts and rng.random() < 0.6:
                    g = gts[rng.integers(len(gts))]
                    box = tuple(np.clip(np.array(g) + rng.integers(-6, 7, 4), 0, 100))
                    if box[2] <= box[0] or box[3] <= box[1]:
                        box = g
                else:
                    box = tuple(_rand_box(rng))
                dets.append((round(float(rng.random()), 1), box))
            images[f"img{k}"] = (gts, dets)
        flags, positives = greedy_outcomes(
            {i: (g, [(s, tuple(float(v) for v in b)) for s, b in d]) for i, (g, d) in images.items()}, 0.5
        )
        curve = pr_curve(_results(images), 1)
        assert float(envelope_ap(flags, positives)) == pytest.approx(average_precision(curve), abs=1e-9)


def _rand_box(rng):
    x0, y0 = rng.integers(0, 80, 2)
    w, h = rng.integers(5, 20, 2)
    return [int(x0), int(y0), int(x0 + w), int(y0 + h)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=15), st.integers(1, 20))
def test_curve_invariants_and_oracle(flags, extra):
    positives = sum(flags) + extra % 3
    if positives == 0:
        positives = 1
    tp = np.cumsum(flags)
    k = np.arange(1, len(flags) + 1)
    c = PRCurve(1, tuple(tp / positives), tuple(tp / k), tuple(range(len(flags), 0, -1)), positives)
    assert all(b >= a for a, b in zip(c.recall, c.recall[1:]))
    assert average_precision(c) == pytest.approx(float(envelope_ap(flags, positives)), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 0.99), boxes100), min_size=1, max_size=10))
def test_ap_invariant_under_monotone_rescaling(dets):
    gts = [(10, 10, 50, 50), (60, 60, 90, 90)]
    base = pr_curve(_results({"a": (gts, dets)}), 1)
    squashed = pr_curve(_results({"a": (gts, [(s**3, b) for s, b in dets])}), 1)
    assert average_precision(base) == average_precision(squashed)


# ------------------------------------------------------------------ mAP


def test_map_one_class():
    assert mean_average_precision({1: 0.42}, {1: 5}) == 0.42


def test_map_mean_and_exclusion():
    assert mean_average_precision({1: 1.0, 2: 0.0}, {1: 3, 2: 4}) == 0.5
    assert mean_average_precision({1: 1.0, 2: 0.0, 3: 0.0}, {1: 3, 2: 4, 3: 0}) == 0.5


def test_map_needs_ground_truth():
    with pytest.raises(ValidationError):
        mean_average_precision({1: 0.0}, {1: 0})


# ------------------------------------------------------------------ classification


@pytest.mark.parametrize(
    "scores, positive",
    [([0.51], True), ([0.50], False), ([], False), ([0.2, 0.9], True)],
)
def test_classify_images(scores, positive):
    batch = DetectionBatch("x", tuple((0, 0, 1, 1) for _ in scores), tuple(scores), (1,) * len(scores), len(scores))
    assert classify_images([batch], 0.5) == {"x": positive}


def test_classification_percentages_truncate():
    cases = {
        (47, 13, 35, 5): ("82.00", "78.33", "90.38"),
        (37, 13, 35, 15): ("72.00", "74.00", "71.15"),
        (25, 23, 25, 27): ("50.00", "52.08", "48.07"),
    }
    for (tp, fp, tn, fn), expected in cases.items():
        m = classification_metrics(ConfusionCounts(tp, fp, tn, fn))
        p = m.percents()
        assert (p["accuracy"], p["precision"], p["recall"]) == expected


def test_undefined_ratios_are_not_zero():
    m = classification_metrics(ConfusionCounts(tp=0, fp=0, tn=5, fn=0))
    assert m.precision is None and m.recall is None
    assert m.accuracy == 1
    assert m.percents()["precision"] == "n/a"


@given(st.integers(0, 200), st.integers(0, 200), st.integers(0, 200), st.integers(0, 200))
def test_classification_identities(tp, fp, tn, fn):
    c = ConfusionCounts(tp, fp, tn, fn)
    m = classification_metrics(c)
    if c.total:
        assert m.accuracy * c.total == tp + tn
        assert abs(float(m.accuracy) * c.total - (tp + tn)) <= 1e-9 * max(1, c.total)
    if tp + fn:
        assert m.recall * (tp + fn) == tp


def test_format_percent_truncates():
    assert format_percent(Fraction(25, 52)) == "48.07"
    assert format_percent(Fraction(1, 1)) == "100.00"
    assert format_percent(Fraction(0)) == "0.00"


def test_evaluate_zero_detections(data_dir):
    report = evaluate(load_manifest(data_dir / "manifest.json"), [])
    assert report.map_continuous == 0.0
    assert report.classification.recall == 0


def test_evaluate_rejects_unknown_image(data_dir):
    with pytest.raises(ValidationError, match="nowhere"):
        evaluate(load_manifest(data_dir / "manifest.json"), [_det("nowhere", 0.5, (0, 0, 5, 5))])


def test_evaluate_multiclass_excludes_empty_class():
    lm = LabelMap(((1, "algae"), (2, "scum")))
    m = DatasetManifest((_entry("a", [(10, 10, 50, 50)]),), lm)
    r = evaluate(m, [_det("a", 0.9, (10, 10, 50, 50)), _det("a", 0.8, (60, 60, 70, 70), label=2)])
    assert r.per_class[2].positives == 0
    assert r.map_continuous == 1.0


def test_pr_csv_header(data_dir):
    report = evaluate(load_manifest(data_dir / "manifest.json"), load_detections(data_dir / "detections.json"))
    lines = report.curves[1].to_csv().splitlines()
    assert lines[0] == "rank,score,recall,precision"
    assert len(lines) == 5
    assert lines[1].startswith("1,0.95,")


@pytest.mark.parametrize("positives", [3, 7, 24, 49, 97])
def test_perfect_curve_is_exactly_one(positives):
    curve = PRCurve(1, tuple(k / positives for k in range(1, positives + 1)), (1.0,) * positives,
                    (0.9,) * positives, positives)
    assert average_precision(curve, APMethod.CONTINUOUS) == 1.0
    assert average_precision(curve, APMethod.ELEVEN_POINT) == 1.0
