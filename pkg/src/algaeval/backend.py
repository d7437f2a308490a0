"""Detector backends, frame runs and throughput/latency benchmarking.

An external backend is any executable that reads one JSON request per line
on stdin and writes one JSON response per line on stdout, in order::

    -> {"image_path": "...", "image_id": "..."}
    <- {"image_id": "...", "boxes": [[y_min, x_min, y_max, x_max], ...],
        "scores": [...], "classes": [...], "num_detections": N}

Boxes are normalized. Entries past ``num_detections`` are ignored.
"""

from __future__ import annotations

import collections
import json
import math
import os
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from . import baseline, jsonio
from .detections import DetectionBatch, parse_batch
from .errors import AlgaevalError, BackendError, ProtocolError, ValidationError
from .geometry import BoundingBox, ImageSize, clamp_to_image, denormalize
from .imageio import read_image

TIMEOUT_ENV = "ALGAEVAL_BACKEND_TIMEOUT_SECS"
DEFAULT_TIMEOUT = 30.0
DEFAULT_WARMUP = 10


def backend_timeout() -> float:
    raw = os.environ.get(TIMEOUT_ENV)
    if raw is None or not raw.strip():
        return DEFAULT_TIMEOUT
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(f"{TIMEOUT_ENV} must be a number of seconds, got {raw!r}") from None
    if value <= 0:
        raise ValidationError(f"{TIMEOUT_ENV} must be positive")
    return value


class FrameTimeout(ProtocolError):
    pass


class Frame(NamedTuple):
    image_id: str
    path: str


def as_frames(items) -> list[Frame]:
    """Accept ``Frame``/``(image_id, path)`` pairs or bare paths (id = file stem)."""
    out = []
    for it in items:
        if isinstance(it, (str, os.PathLike)):
            out.append(Frame(Path(it).stem, str(it)))
        else:
            image_id, path = it
            out.append(Frame(str(image_id), str(path)))
    return out


class Backend:
    """Pipelined detector interface: ``submit`` frames, ``collect`` results in order."""

    name = "backend"

    def submit(self, frame: Frame) -> None:
        raise NotImplementedError

    def collect(self) -> DetectionBatch:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BuiltinBaselineBackend(Backend):
    """The colour-heuristic detector, run in-process."""

    name = "builtin-baseline"

    def __init__(self, thresholds=None, min_area_fraction=baseline.DEFAULT_MIN_AREA_FRACTION):
        self.thresholds = thresholds or baseline.ColorThresholds()
        self.min_area_fraction = min_area_fraction
        self._pending = collections.deque()

    def submit(self, frame):
        self._pending.append(frame)

    def collect(self):
        frame = self._pending.popleft()
        pixels = read_image(frame.path)
        return baseline.detect(pixels, self.thresholds, self.min_area_fraction, image_id=frame.image_id)


_EOF = object()


class SubprocessBackend(Backend):
    """Talks newline-delimited JSON to a child process."""

    def __init__(self, command, timeout=None, cwd=None, env=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = " ".join(self.command)
        self.timeout = backend_timeout() if timeout is None else float(timeout)
        self._pending = collections.deque()
        self._stale = set()
        self._lines = queue.Queue()
        self._stderr = collections.deque(maxlen=50)
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                cwd=cwd,
                env=env,
            )
        except (FileNotFoundError, PermissionError, NotADirectoryError) as exc:
            raise BackendError(f"cannot start backend {self.name!r}: {exc.strerror or exc}") from None
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()

    def _pump_stdout(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _pump_stderr(self):
        for line in self.proc.stderr:
            self._stderr.append(line.rstrip("\n"))

    def stderr_tail(self) -> str:
        return "\n".join(self._stderr)

    def _crashed(self, what):
        try:
            rc = self.proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            rc = None
        time.sleep(0.05)  # let the stderr pump drain
        return BackendError(f"backend {what} (exit status {rc})", returncode=rc, stderr_tail=self.stderr_tail())

    def submit(self, frame):
        line = json.dumps({"image_path": str(frame.path), "image_id": frame.image_id}) + "\n"
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            raise self._crashed("closed its input") from None
        self._pending.append(frame)

    def collect(self):
        frame = self._pending.popleft()
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            try:
                line = self._lines.get(timeout=max(remaining, 0.0))
            except queue.Empty:
                # a late answer for this frame will be recognised and dropped
                self._stale.add(frame.image_id)
                raise FrameTimeout(f"frame {frame.image_id!r}: no response within {self.timeout:g} s") from None
            if line is _EOF:
                self._lines.put(_EOF)
                raise self._crashed("exited")
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"frame {frame.image_id!r}: response is not JSON ({exc.msg})") from None
            rid = obj.get("image_id") if isinstance(obj, dict) else None
            if rid in self._stale and rid != frame.image_id:
                self._stale.discard(rid)
                continue
            return parse_batch(obj, expected_image_id=frame.image_id)

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


# ------------------------------------------------------------------ runs


@dataclass
class FrameResult:
    image_id: str
    path: str
    batch: DetectionBatch | None
    error: str | None
    submitted: float  # perf_counter timestamps
    completed: float

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def latency(self) -> float:
        return self.completed - self.submitted


def _drive(backend: Backend, frames, max_in_flight: int) -> list[FrameResult]:
    if max_in_flight < 1:
        raise ValidationError("max_in_flight must be at least 1")
    frames = as_frames(frames)
    results: list[FrameResult] = []
    submitted = collections.deque()
    nxt = 0
    try:
        while len(results) < len(frames):
            while nxt < len(frames) and len(submitted) < max_in_flight:
                submitted.append(time.perf_counter())
                backend.submit(frames[nxt])
                nxt += 1
            frame = frames[len(results)]
            try:
                batch, error = backend.collect(), None
            except BackendError:
                raise
            except AlgaevalError as exc:
                batch, error = None, str(exc)
            results.append(FrameResult(frame.image_id, frame.path, batch, error, submitted.popleft(), time.perf_counter()))
    except BackendError as exc:
        exc.partial = results
        raise
    return results


def run_backend(backend: Backend, frames, max_in_flight: int = 1) -> list[FrameResult]:
    """One result per frame, in input order. Bad frames become error placeholders.

    A backend crash raises :class:`BackendError` whose ``partial`` holds the
    results gathered so far.
    """
    return _drive(backend, frames, max_in_flight)


def nearest_rank(values, pct: int) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("percentile of an empty sequence")
    rank = max(1, -(-pct * len(ordered) // 100))
    return ordered[rank - 1]


@dataclass
class BenchmarkReport:
    backend: str
    frames_total: int
    frames_warmup: int
    max_in_flight: int
    wall_time: float  # seconds, post-warmup
    fps: float
    latency_p50: float  # milliseconds
    latency_p95: float
    latencies: list = field(default_factory=list)  # ms, post-warmup frames
    frame_errors: int = 0
    results: list = field(default_factory=list, compare=False, repr=False)

    def to_json(self) -> dict:
        return {
            "backend": self.backend,
            "frames_total": self.frames_total,
            "frames_warmup": self.frames_warmup,
            "max_in_flight": self.max_in_flight,
            "wall_time": self.wall_time,
            "fps": self.fps,
            "latency_p50": self.latency_p50,
            "latency_p95": self.latency_p95,
            "latencies": list(self.latencies),
            "frame_errors": self.frame_errors,
        }


BENCHMARK_TIMING_FIELDS = ("wall_time", "fps", "latency_p50", "latency_p95", "latencies")


def parse_benchmark_report(obj) -> BenchmarkReport:
    keys = {"backend", "frames_total", "frames_warmup", "max_in_flight", "wall_time", "fps",
            "latency_p50", "latency_p95", "latencies", "frame_errors"}
    if not isinstance(obj, dict) or set(obj) != keys:
        raise ValidationError(f"benchmark report must have exactly the keys {sorted(keys)}", where="$")

    def count(v):
        return isinstance(v, int) and not isinstance(v, bool) and v >= 0

    def real(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v >= 0

    if not isinstance(obj["backend"], str):
        raise ValidationError("backend must be a string", where="backend")
    for k in ("frames_total", "frames_warmup", "max_in_flight", "frame_errors"):
        if not count(obj[k]):
            raise ValidationError(f"{k} must be a non-negative integer", where=k)
    for k in ("wall_time", "fps", "latency_p50", "latency_p95"):
        if not real(obj[k]):
            raise ValidationError(f"{k} must be a non-negative number", where=k)
    lat = obj["latencies"]
    if not isinstance(lat, list) or not all(real(v) for v in lat):
        raise ValidationError("latencies must be a list of non-negative numbers", where="latencies")
    if len(lat) != obj["frames_total"] - obj["frames_warmup"]:
        raise ValidationError("latencies must hold one entry per timed frame", where="latencies")
    return BenchmarkReport(**obj)


def load_benchmark_report(path) -> BenchmarkReport:
    return parse_benchmark_report(jsonio.read_json(path, ValidationError, "benchmark report"))


def benchmark(backend: Backend, frames, warmup: int = DEFAULT_WARMUP, max_in_flight: int = 1) -> BenchmarkReport:
    """Time a backend over ``frames``.

    The wall clock starts when the last warmup frame completes and stops when
    the final frame completes; ``fps = (frames_total - frames_warmup) / wall_time``.
    Latency is submit-to-completion per frame, so with ``max_in_flight > 1``
    it includes queueing behind earlier frames.
    """
    frames = as_frames(frames)
    if not 0 <= warmup < len(frames):
        raise ValidationError(f"warmup ({warmup}) must be smaller than the frame count ({len(frames)})")
    t_begin = time.perf_counter()
    results = _drive(backend, frames, max_in_flight)
    start = results[warmup - 1].completed if warmup > 0 else t_begin
    wall = results[-1].completed - start
    timed = results[warmup:]
    lat_ms = [r.latency * 1000.0 for r in timed]
    return BenchmarkReport(
        backend=backend.name,
        frames_total=len(frames),
        frames_warmup=warmup,
        max_in_flight=max_in_flight,
        wall_time=wall,
        fps=len(timed) / wall if wall > 0 else float("inf"),
        latency_p50=nearest_rank(lat_ms, 50),
        latency_p95=nearest_rank(lat_ms, 95),
        latencies=lat_ms,
        frame_errors=sum(not r.ok for r in results),
        results=results,
    )


# ------------------------------------------------------------------ post-processing


class ScoredBox(NamedTuple):
    label_id: int
    score: float
    box: BoundingBox  # pixel space, inside the image
    clipped: bool


def threshold_and_convert(
    batch: DetectionBatch, size: ImageSize, score_threshold: float = 0.5, paper_compat: bool = False
) -> list[ScoredBox]:
    """Keep detections scoring strictly above the threshold, as clamped pixel boxes."""
    out = []
    for det in batch.detections()[: batch.num_detections]:
        if not det.score > score_threshold:
            continue
        clamped = clamp_to_image(denormalize(det.box, size, paper_compat), size)
        out.append(ScoredBox(det.label_id, det.score, clamped.box, clamped.clipped))
    return out
