"""``algaeval`` command line.

Exit codes: 0 success, 2 invalid input, 3 backend failure, 4 some input
files failed (outputs for the rest are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, jsonio
from .backend import (
    DEFAULT_WARMUP,
    BuiltinBaselineBackend,
    SubprocessBackend,
    as_frames,
    benchmark,
    load_benchmark_report,
    threshold_and_convert,
)
from .baseline import DEFAULT_MIN_AREA_FRACTION, ColorThresholds, detect
from .dataset import LabelMap, Subset, load_manifest, load_split, split
from .detections import DetectionBatch, load_detections, save_detections
from .errors import AlgaevalError, BackendError, ValidationError
from .geometry import ImageSize
from .imageio import atomic_write_bytes, read_image, write_image
from .metrics import APMethod, evaluate, format_percent
from .overlay import OverlaySpec, render_overlay

log = logging.getLogger("algaeval")

EXIT_OK, EXIT_INPUT, EXIT_BACKEND, EXIT_PARTIAL = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text, n, flag):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"{flag}: expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise ValidationError(f"{flag}: expected {n} comma-separated numbers, got {text!r}")
    return vals


def _check_unit(value, flag, open_low=False):
    if not (0.0 < value <= 1.0 if open_low else 0.0 <= value <= 1.0):
        raise ValidationError(f"{flag} must lie in {'(0, 1]' if open_low else '[0, 1]'}, got {value}")


def _thresholds(args) -> ColorThresholds:
    lo, hi = _floats(args.hue_range, 2, "--hue-range")
    try:
        return ColorThresholds((lo, hi), args.saturation_min, args.value_min)
    except ValidationError as exc:
        raise ValidationError(f"color thresholds: {exc}") from None


def _summary_table(rows) -> str:
    """Accuracy / Precision / Recall / mAP / FPS table, one row per system."""
    header = ["", "Accuracy", "Precision", "Recall", "mAP", "FPS"]
    table = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    lines = [sep]
    for k, r in enumerate(table):
        lines.append("| " + " | ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) + " |")
        if k == 0:
            lines.append(sep)
    lines.append(sep)
    return "\n".join(lines)


def _pct(x):
    s = format_percent(x)
    return s if s == "n/a" else s + "%"


# ------------------------------------------------------------------ subcommands


def cmd_split(args) -> int:
    ratios = _floats(args.ratios, 3, "--ratios")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"--ratios must be three non-negative numbers summing to 1, got {args.ratios}")
    manifest = load_manifest(args.manifest)
    assignment = split(manifest, ratios, args.seed)
    jsonio.write_json(args.output, assignment.to_json())
    tr, va, te = assignment.counts()
    print(f"train {tr}  val {va}  test {te}  (seed {args.seed}) -> {args.output}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _check_unit(args.iou_threshold, "--iou-threshold", open_low=True)
    _check_unit(args.score_threshold, "--score-threshold")
    manifest = load_manifest(args.manifest)
    detections = load_detections(args.detections)
    narrowed = False
    if args.split:
        assignment = load_split(args.split)
        missing = sorted(set(assignment.assignments) - set(manifest.ids))
        if missing:
            raise ValidationError(f"split file names images absent from the manifest: {', '.join(missing[:5])}")
        unknown = sorted({d.image_id for d in detections} - set(manifest.ids))
        if unknown:
            raise ValidationError(f"detection references unknown image {unknown[0]!r}")
        manifest = manifest.subset(assignment.members(args.subset))
        narrowed = True
    report = evaluate(
        manifest,
        detections,
        iou_threshold=args.iou_threshold,
        score_threshold=args.score_threshold,
        ap_method=APMethod(args.ap_method),
        paper_compat=args.paper_compat,
        allow_unknown=narrowed,
    )
    if args.output:
        jsonio.write_json(args.output, report.to_json())
    if args.pr_csv:
        label = args.pr_class if args.pr_class is not None else manifest.label_map.ids[0]
        if label not in report.curves:
            raise ValidationError(f"--pr-class {label} is not a known label")
        atomic_write_bytes(args.pr_csv, report.curves[label].to_csv().encode("utf-8"))

    fps = "-"
    if args.benchmark_report:
        fps = f"{load_benchmark_report(args.benchmark_report).fps:.2f}"
    cm = report.classification
    name = Path(args.detections).stem
    print(_summary_table([[name, _pct(cm.accuracy), _pct(cm.precision), _pct(cm.recall), _pct(report.map), fps]]))
    c = report.counts
    print(f"images {c.total}: tp {c.tp}  fp {c.fp}  tn {c.tn}  fn {c.fn}   "
          f"mAP continuous {_pct(report.map_continuous)}  11-point {_pct(report.map_eleven_point)}  "
          f"(IoU > {args.iou_threshold:g}, score > {args.score_threshold:g})")
    return EXIT_OK


def cmd_visualize(args) -> int:
    _check_unit(args.score_threshold, "--score-threshold")
    pixels = read_image(args.image)
    h, w = pixels.shape[:2]
    image_id = args.image_id or Path(args.image).stem
    dets = [d for d in load_detections(args.detections) if d.image_id == image_id]
    batch = DetectionBatch.from_detections(image_id, dets)
    boxes = threshold_and_convert(batch, ImageSize(w, h), args.score_threshold, args.paper_compat)
    clipped = sum(b.clipped for b in boxes)
    if clipped:
        log.warning("%d box(es) extended past the image and were clamped", clipped)
    color = tuple(int(v) for v in _floats(args.color, 3, "--color"))
    spec = OverlaySpec(color=color, stroke=args.stroke, labels=not args.no_labels)
    label_map = LabelMap.load(args.label_map) if args.label_map else LabelMap.default()
    write_image(args.output, render_overlay(pixels, boxes, spec, label_map))
    print(f"{len(boxes)} box(es) above {args.score_threshold:g} drawn -> {args.output}")
    return EXIT_OK


def _frames_from_args(args):
    if args.manifest:
        m = load_manifest(args.manifest)
        return [(e.image_id, str(m.image_path(e))) for e in m.images]
    if not args.images:
        raise ValidationError("no input images given (positional paths or --manifest)")
    return as_frames(args.images)


def cmd_benchmark(args) -> int:
    frames = _frames_from_args(args)
    if args.builtin_baseline:
        backend = BuiltinBaselineBackend(_thresholds(args), args.min_area_fraction)
    else:
        backend = SubprocessBackend(args.backend_cmd)
    with backend:
        report = benchmark(backend, frames, warmup=args.warmup, max_in_flight=args.max_in_flight)
    if args.output:
        jsonio.write_json(args.output, report.to_json())
    if args.detections_out:
        dets = [d for r in report.results if r.ok for d in r.batch.detections()]
        save_detections(dets, args.detections_out)
    print(_summary_table([[report.backend, "-", "-", "-", "-", f"{report.fps:.2f}"]]))
    print(f"frames {report.frames_total} (warmup {report.frames_warmup}), wall {report.wall_time:.3f} s, "
          f"p50 {report.latency_p50:.2f} ms, p95 {report.latency_p95:.2f} ms, "
          f"in-flight {report.max_in_flight}, errors {report.frame_errors}")
    for r in report.results:
        if not r.ok:
            print(f"frame error: {r.error}", file=sys.stderr)
    return EXIT_OK


def cmd_baseline_detect(args) -> int:
    thresholds = _thresholds(args)
    if not 0.0 <= args.min_area_fraction < 1.0:
        raise ValidationError("--min-area-fraction must lie in [0, 1)")
    frames = _frames_from_args(args)
    detections, failed = [], 0
    for image_id, path in frames:
        try:
            pixels = read_image(path)
        except AlgaevalError as exc:
            failed += 1
            print(f"error: {image_id}: {exc}", file=sys.stderr)
            continue
        detections.extend(detect(pixels, thresholds, args.min_area_fraction, image_id=image_id).detections())
    save_detections(detections, args.output)
    print(f"{len(detections)} detection(s) from {len(frames) - failed}/{len(frames)} image(s) -> {args.output}")
    return EXIT_PARTIAL if failed else EXIT_OK


# ------------------------------------------------------------------ parser


def _add_color_flags(p):
    p.add_argument("--hue-range", default="70,170", help="hue window in degrees, LOW,HIGH (wraps if LOW > HIGH)")
    p.add_argument("--saturation-min", type=float, default=0.25)
    p.add_argument("--value-min", type=float, default=0.15)
    p.add_argument("--min-area-fraction", type=float, default=DEFAULT_MIN_AREA_FRACTION)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="algaeval", description="Evaluate, benchmark and run baseline algae detectors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="assign manifest images to train/val/test")
    p.add_argument("manifest")
    p.add_argument("--ratios", default="0.7,0.2,0.1", help="TRAIN,VAL,TEST fractions summing to 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", help="mAP and image-level metrics for a detections file")
    p.add_argument("manifest")
    p.add_argument("detections")
    p.add_argument("--split", help="split JSON; evaluate only --subset of it")
    p.add_argument("--subset", choices=[s.value for s in Subset], default="test")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.add_argument("--ap-method", choices=[m.value for m in APMethod], default=APMethod.CONTINUOUS.value)
    p.add_argument("--paper-compat", action="store_true", help="scale every box coordinate by image width")
    p.add_argument("--pr-class", type=int, default=None, help="label id for --pr-csv (default: first label)")
    p.add_argument("--pr-csv")
    p.add_argument("--benchmark-report", help="benchmark JSON whose fps fills the FPS column")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("visualize", help="draw thresholded detections onto an image")
    p.add_argument("image")
    p.add_argument("detections")
    p.add_argument("--image-id", help="detections image_id (default: image file stem)")
    p.add_argument("--score-threshold", type=float, default=0.5)
    p.add_argument("--paper-compat", action="store_true")
    p.add_argument("--color", default="0,255,0")
    p.add_argument("--stroke", type=int, default=2)
    p.add_argument("--no-labels", action="store_true")
    p.add_argument("--label-map")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("benchmark", help="throughput and latency of a detector backend")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin-baseline", action="store_true")
    g.add_argument("--backend-cmd", help="command line of a wire-protocol backend")
    p.add_argument("images", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    p.add_argument("--max-in-flight", type=int, default=1)
    p.add_argument("--detections-out")
    p.add_argument("-o", "--output")
    _add_color_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("baseline-detect", help="run the colour-heuristic detector")
    p.add_argument("images", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("-o", "--output", required=True)
    _add_color_flags(p)
    p.set_defaults(func=cmd_baseline_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        if exc.stderr_tail:
            print("backend stderr (tail):\n" + exc.stderr_tail, file=sys.stderr)
        return EXIT_BACKEND
    except AlgaevalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
