"""Synthetic scenes: green rectangles on non-green, lightly noisy backgrounds.

Every rectangle is separated from the others by at least ``gap`` pixels, so
the baseline detector should recover each one exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, GroundTruthBox, ImageEntry, LabelMap, save_manifest
from .geometry import BoundingBox, ImageSize, Space
from .imageio import write_image

# backgrounds well outside the default hue window (hue 0 / 30 / 225 degrees)
BACKGROUNDS = ((120, 120, 120), (140, 100, 60), (40, 70, 160), (90, 90, 100))
GREENS = ((40, 160, 60), (30, 200, 120), (60, 140, 40), (20, 140, 80))


def _overlaps(a, b, gap):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return not (ax1 + gap <= bx0 or bx1 + gap <= ax0 or ay1 + gap <= by0 or by1 + gap <= ay0)


def make_scene(rng, width=160, height=120, max_rects=3, min_side=12, max_side=48, noise=6, gap=3):
    """Return ``(pixels, rects)`` with rects as ``(x0, y0, x1, y1)`` pixel corners."""
    bg = np.array(BACKGROUNDS[rng.integers(len(BACKGROUNDS))], dtype=np.int16)
    img = np.broadcast_to(bg, (height, width, 3)).copy()
    img += rng.integers(-noise, noise + 1, size=img.shape, dtype=np.int16)
    rects = []
    want = int(rng.integers(1, max_rects + 1))
    for _ in range(200):
        if len(rects) == want:
            break
        w = int(rng.integers(min_side, min(max_side, width - 2) + 1))
        h = int(rng.integers(min_side, min(max_side, height - 2) + 1))
        x0 = int(rng.integers(1, width - w))
        y0 = int(rng.integers(1, height - h))
        r = (x0, y0, x0 + w, y0 + h)
        if any(_overlaps(r, o, gap) for o in rects):
            continue
        rects.append(r)
        green = np.array(GREENS[rng.integers(len(GREENS))], dtype=np.int16)
        patch = green + rng.integers(-noise, noise + 1, size=(h, w, 3), dtype=np.int16)
        img[y0 : y0 + h, x0 : x0 + w] = patch
    return np.clip(img, 0, 255).astype(np.uint8), rects


def write_suite(directory, count=50, seed=0, **scene_kwargs) -> DatasetManifest:
    """Write ``count`` PPM scenes plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    sizes = ((160, 120), (200, 150), (128, 128), (96, 160))
    entries = []
    for k in range(count):
        w, h = sizes[k % len(sizes)]
        pixels, rects = make_scene(rng, w, h, **scene_kwargs)
        name = f"scene_{k:03d}.ppm"
        write_image(directory / name, pixels)
        gts = tuple(GroundTruthBox(1, BoundingBox(*map(float, r), Space.PIXEL)) for r in rects)
        entries.append(ImageEntry(f"scene_{k:03d}", name, ImageSize(w, h), gts))
    manifest = DatasetManifest(tuple(entries), LabelMap.default(), directory)
    save_manifest(manifest, directory / "manifest.json")
    return manifest
