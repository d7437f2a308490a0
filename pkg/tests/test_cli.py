import json
import subprocess
import sys

import numpy as np
import pytest

from algaeval import jsonio
from algaeval.backend import load_benchmark_report
from algaeval.cli import main
from algaeval.dataset import DatasetManifest, GroundTruthBox, ImageEntry, LabelMap, save_manifest
from algaeval.detections import Detection, load_detections, save_detections
from algaeval.geometry import BoundingBox, ImageSize, Space
from algaeval.imageio import read_image, write_image
from algaeval.metrics import parse_report
from algaeval.synthetic import write_suite


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def _flat_manifest(path, n, boxes=None):
    entries = []
    for k in range(n):
        gts = tuple(GroundTruthBox(1, BoundingBox(*b, Space.PIXEL)) for b in (boxes(k) if boxes else ()))
        entries.append(ImageEntry(f"img_{k:03d}", f"img_{k:03d}.ppm", ImageSize(100, 100), gts))
    m = DatasetManifest(tuple(entries), LabelMap.default())
    save_manifest(m, path)
    return m


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    d = tmp_path_factory.mktemp("suite")
    return d, write_suite(d, count=12, seed=3)


# ------------------------------------------------------------------ split


def test_split_counts_and_determinism(tmp_path, capsys):
    _flat_manifest(tmp_path / "m.json", 100)
    assert run(["split", tmp_path / "m.json", "--seed", 5, "-o", tmp_path / "a.json"]) == 0
    assert "train 70  val 20  test 10" in capsys.readouterr().out
    assert run(["split", tmp_path / "m.json", "--seed", 5, "-o", tmp_path / "b.json"]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    obj = json.loads((tmp_path / "a.json").read_text())
    assert obj["seed"] == 5 and len(obj["assignments"]) == 100


@pytest.mark.parametrize("ratios", ["0.7,0.2,0.2", "0.7,0.3", "a,b,c", "1.2,-0.1,-0.1"])
def test_split_bad_ratios(tmp_path, capsys, ratios):
    _flat_manifest(tmp_path / "m.json", 10)
    assert run(["split", tmp_path / "m.json", "--ratios", ratios, "-o", tmp_path / "s.json"]) == 2
    assert "--ratios" in capsys.readouterr().err
    assert not (tmp_path / "s.json").exists()


def test_usage_error_exits_2(capsys):
    assert run(["split"]) == 2
    assert run(["no-such-command"]) == 2


# ------------------------------------------------------------------ evaluate


def test_evaluate_baseline_on_suite(suite, tmp_path, capsys):
    d, _ = suite
    dets, rep = tmp_path / "dets.json", tmp_path / "report.json"
    assert run(["baseline-detect", "--manifest", d / "manifest.json", "-o", dets]) == 0
    assert run(["evaluate", d / "manifest.json", dets, "-o", rep, "--pr-csv", tmp_path / "pr.csv"]) == 0
    report = parse_report(json.loads(rep.read_text()))
    assert report.map_continuous == 1.0 and report.map_eleven_point == 1.0
    out = capsys.readouterr().out
    assert "Accuracy" in out and "FPS" in out and "100.00%" in out
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "rank,score,recall,precision"
    assert lines[-1] == "24,1.0,1.0,1.0"


def test_evaluate_zero_detections(tmp_path, capsys):
    _flat_manifest(tmp_path / "m.json", 4, boxes=lambda k: [(10, 10, 50, 50)])
    save_detections([], tmp_path / "d.json")
    assert run(["evaluate", tmp_path / "m.json", tmp_path / "d.json", "-o", tmp_path / "r.json"]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    assert r["map_continuous"] == 0 and r["recall"] == 0
    assert r["counts"] == {"tp": 0, "fp": 0, "tn": 0, "fn": 4}


def test_evaluate_classification_fixture(tmp_path, capsys):
    # 52 images with algae, 48 without; detector fires on 47 + 13 of them
    _flat_manifest(tmp_path / "m.json", 100, boxes=lambda k: [(10, 10, 50, 50)] if k < 52 else [])
    fires = list(range(47)) + list(range(52, 65))
    dets = [Detection(f"img_{k:03d}", 1, 0.9, BoundingBox(0.1, 0.1, 0.5, 0.5, Space.NORMALIZED)) for k in fires]
    save_detections(dets, tmp_path / "d.json")
    assert run(["evaluate", tmp_path / "m.json", tmp_path / "d.json", "-o", tmp_path / "r.json"]) == 0
    out = capsys.readouterr().out
    assert "82.00%" in out and "78.33%" in out and "90.38%" in out
    r = json.loads((tmp_path / "r.json").read_text())
    assert r["counts"] == {"tp": 47, "fp": 13, "tn": 35, "fn": 5}
    assert r["accuracy"] == pytest.approx(0.82)


def test_evaluate_with_split(suite, tmp_path):
    d, m = suite
    dets = tmp_path / "dets.json"
    run(["baseline-detect", "--manifest", d / "manifest.json", "-o", dets])
    run(["split", d / "manifest.json", "--ratios", "0.5,0.25,0.25", "-o", tmp_path / "s.json"])
    assert run(["evaluate", d / "manifest.json", dets, "--split", tmp_path / "s.json", "-o", tmp_path / "r.json"]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    test_ids = [k for k, v in json.loads((tmp_path / "s.json").read_text())["assignments"].items() if v == "test"]
    assert len(test_ids) == 3
    assert sum(r["counts"].values()) == 3


def test_evaluate_fps_column_from_benchmark(data_dir, tmp_path, capsys):
    bench = tmp_path / "b.json"
    jsonio.write_json(bench, {"backend": "x", "frames_total": 2, "frames_warmup": 0, "max_in_flight": 1,
                              "wall_time": 0.5, "fps": 4.0, "latency_p50": 1.0, "latency_p95": 2.0,
                              "latencies": [1.0, 2.0], "frame_errors": 0})
    assert load_benchmark_report(bench).fps == 4.0
    assert run(["evaluate", data_dir / "manifest.json", data_dir / "detections.json", "--benchmark-report", bench]) == 0
    assert "4.00 |" in capsys.readouterr().out


@pytest.mark.parametrize("flag, value", [("--iou-threshold", "0"), ("--iou-threshold", "1.5"),
                                         ("--score-threshold", "-0.1"), ("--ap-method", "voc")])
def test_evaluate_flag_validation(data_dir, flag, value):
    assert run(["evaluate", data_dir / "manifest.json", data_dir / "detections.json", flag, value]) == 2


def test_evaluate_eleven_point_headline(data_dir, tmp_path):
    assert run(["evaluate", data_dir / "manifest.json", data_dir / "detections.json",
                "--ap-method", "eleven-point", "-o", tmp_path / "r.json"]) == 0
    r = json.loads((tmp_path / "r.json").read_text())
    assert r["ap_method"] == "eleven-point"
    assert r["map_eleven_point"] == pytest.approx(10 / 11, abs=1e-12)
    assert r["map_continuous"] == pytest.approx(11 / 12, abs=1e-12)


# ------------------------------------------------------------------ visualize


def _image_and_dets(tmp_path, boxes, h=48, w=64):
    img = np.full((h, w, 3), 90, np.uint8)
    write_image(tmp_path / "im.ppm", img)
    save_detections([Detection("im", 1, s, BoundingBox(*b, Space.NORMALIZED)) for b, s in boxes], tmp_path / "d.json")
    return img


def test_visualize_no_retained_boxes(tmp_path):
    img = _image_and_dets(tmp_path, [((0.1, 0.1, 0.5, 0.5), 0.3)])
    assert run(["visualize", tmp_path / "im.ppm", tmp_path / "d.json", "-o", tmp_path / "o.ppm"]) == 0
    assert np.array_equal(read_image(tmp_path / "o.ppm"), img)


def test_visualize_full_image_ring(tmp_path):
    img = _image_and_dets(tmp_path, [((0, 0, 1, 1), 0.9)])
    assert run(["visualize", tmp_path / "im.ppm", tmp_path / "d.json", "--no-labels", "--stroke", 1,
                "--color", "255,0,0", "-o", tmp_path / "o.png"]) == 0
    out = read_image(tmp_path / "o.png")
    ring = np.zeros(img.shape[:2], bool)
    ring[[0, -1], :] = True
    ring[:, [0, -1]] = True
    assert (out[ring] == (255, 0, 0)).all()
    assert np.array_equal(out[~ring], img[~ring])


def test_visualize_golden(data_dir, tmp_path):
    assert run(["visualize", data_dir / "overlay_input.ppm", data_dir / "overlay_detections.json",
                "--image-id", "fixture", "-o", tmp_path / "o.ppm"]) == 0
    assert (tmp_path / "o.ppm").read_bytes() == (data_dir / "overlay_golden.ppm").read_bytes()


@pytest.mark.parametrize("extra", [["--stroke", "0"], ["--color", "0,300,0"], ["--color", "1,2"]])
def test_visualize_bad_overlay_flags(tmp_path, extra):
    _image_and_dets(tmp_path, [])
    assert run(["visualize", tmp_path / "im.ppm", tmp_path / "d.json", "-o", tmp_path / "o.ppm", *extra]) == 2


# ------------------------------------------------------------------ benchmark


def test_benchmark_builtin_110_frames(tmp_path, capsys):
    d = tmp_path / "s"
    write_suite(d, count=110, seed=1, max_rects=1)
    rep, dets = tmp_path / "b.json", tmp_path / "d.json"
    assert run(["benchmark", "--builtin-baseline", "--manifest", d / "manifest.json", "-o", rep,
                "--detections-out", dets]) == 0
    r = load_benchmark_report(rep)
    assert r.frames_total == 110 and r.frames_warmup == 10 and len(r.latencies) == 100
    assert r.fps > 0 and r.frame_errors == 0
    assert {x.image_id for x in load_detections(dets)} == {f"scene_{k:03d}" for k in range(110)}


def test_benchmark_mock_sleep(tmp_path, data_dir):
    img = tmp_path / "x.ppm"
    write_image(img, np.zeros((4, 4, 3), np.uint8))
    cmd = f"{sys.executable} -m algaeval.mock_backend --sleep-ms 25"
    assert run(["benchmark", "--backend-cmd", cmd, "--warmup", 2, *[img] * 22, "-o", tmp_path / "b.json"]) == 0
    r = load_benchmark_report(tmp_path / "b.json")
    assert r.fps == pytest.approx(40.0, rel=0.1)


def test_benchmark_missing_executable(tmp_path, capsys):
    img = tmp_path / "x.ppm"
    write_image(img, np.zeros((4, 4, 3), np.uint8))
    assert run(["benchmark", "--backend-cmd", "/nonexistent/detector", img, "--warmup", 0]) == 3
    assert "/nonexistent/detector" in capsys.readouterr().err


def test_benchmark_backend_crash_exits_3(tmp_path, capsys):
    img = tmp_path / "x.ppm"
    write_image(img, np.zeros((4, 4, 3), np.uint8))
    cmd = f"{sys.executable} -m algaeval.mock_backend --crash-after 1"
    assert run(["benchmark", "--backend-cmd", cmd, img, img, img, "--warmup", 0]) == 3
    assert "simulated crash" in capsys.readouterr().err


def test_benchmark_requires_one_backend(tmp_path):
    assert run(["benchmark", "x.ppm"]) == 2
    assert run(["benchmark", "--builtin-baseline", "--backend-cmd", "true", "x.ppm"]) == 2


# ------------------------------------------------------------------ baseline-detect


def test_baseline_detect_matches_suite(suite, tmp_path):
    d, m = suite
    assert run(["baseline-detect", "--manifest", d / "manifest.json", "-o", tmp_path / "d.json"]) == 0
    dets = load_detections(tmp_path / "d.json")
    assert len(dets) == sum(len(e.ground_truth) for e in m.images)


def test_baseline_detect_gray(tmp_path):
    write_image(tmp_path / "g.ppm", np.full((20, 20, 3), 128, np.uint8))
    assert run(["baseline-detect", tmp_path / "g.ppm", "-o", tmp_path / "d.json"]) == 0
    assert json.loads((tmp_path / "d.json").read_text()) == {"detections": []}


def test_baseline_detect_partial_failure(tmp_path, capsys):
    write_image(tmp_path / "g.ppm", np.full((20, 20, 3), 128, np.uint8))
    (tmp_path / "bad.ppm").write_bytes(b"not an image")
    assert run(["baseline-detect", tmp_path / "g.ppm", tmp_path / "bad.ppm", "-o", tmp_path / "d.json"]) == 4
    assert "bad" in capsys.readouterr().err
    assert (tmp_path / "d.json").exists()


def test_malformed_manifest_exit_code(data_dir, tmp_path, capsys):
    assert run(["split", data_dir / "manifest_out_of_bounds.json", "-o", tmp_path / "s.json"]) == 2
    assert "pool_003" in capsys.readouterr().err


def test_console_entry_point(data_dir, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "algaeval", "split", str(data_dir / "manifest.json"),
                           "-o", str(tmp_path / "s.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "algaeval", "split", str(data_dir / "missing.json"),
                           "-o", str(tmp_path / "s.json")], capture_output=True, text=True)
    assert proc.returncode == 2
