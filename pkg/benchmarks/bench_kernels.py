#!/usr/bin/env python3
"""Compare the numba and pure-numpy paths of the baseline detector's hot kernels.

    python3 benchmarks/bench_kernels.py --size 640x480 --repeat 20

Both paths are checked for identical output before timing. The numba
functions are called once beforehand so compilation is not counted.
"""

import argparse
import statistics
import time

import numpy as np

from algaeval import _jit, kernels
from algaeval.baseline import detect
from algaeval.synthetic import make_scene


def _time(fn, repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples) * 1000.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="640x480", help="WIDTHxHEIGHT of the test image")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    w, h = (int(v) for v in args.size.lower().split("x"))

    if not _jit.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(args.seed)
    pixels, _ = make_scene(rng, w, h, max_rects=8, min_side=8, max_side=max(12, min(w, h) // 4))
    noisy = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    mask_args = (70.0, 170.0, 0.25, 0.15)
    mask = kernels.color_mask_numpy(noisy, *mask_args)

    # correctness first, which also triggers compilation
    assert np.array_equal(kernels.color_mask_jit(noisy, *mask_args), mask)
    lj, nj = kernels.label4_jit(mask)
    ln, nn = kernels.label4_numpy(mask)
    assert nj == nn and np.array_equal(lj, ln)

    def detector(use_jit):
        def run():
            _jit.USE_JIT = use_jit
            detect(pixels)
        return run

    rows = [
        ("color_mask", lambda: kernels.color_mask_numpy(noisy, *mask_args),
         lambda: kernels.color_mask_jit(noisy, *mask_args)),
        (f"label4 ({nn} comps)", lambda: kernels.label4_numpy(mask), lambda: kernels.label4_jit(mask)),
        ("detect (scene)", detector(False), detector(True)),
    ]
    saved = _jit.USE_JIT
    detector(True)()
    print(f"image {w}x{h}, median of {args.repeat} runs")
    print(f"{'kernel':<22}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    try:
        for name, slow, fast in rows:
            t_np, t_nb = _time(slow, args.repeat), _time(fast, args.repeat)
            print(f"{name:<22}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.1f}x")
    finally:
        _jit.USE_JIT = saved


if __name__ == "__main__":
    main()
