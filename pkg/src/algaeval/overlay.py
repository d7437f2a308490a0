"""Burn detection boxes and labels into an image.

Text uses a fixed 5x7 bitmap font so the output pixels do not depend on
installed fonts. Lower-case input is drawn in capitals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .imageio import check_rgb

_GLYPHS = {
    "0": "01110 10001 10011 10101 11001 10001 01110",
    "1": "00100 01100 00100 00100 00100 00100 01110",
    "2": "01110 10001 00001 00010 00100 01000 11111",
    "3": "11111 00010 00100 00010 00001 10001 01110",
    "4": "00010 00110 01010 10010 11111 00010 00010",
    "5": "11111 10000 11110 00001 00001 10001 01110",
    "6": "00110 01000 10000 11110 10001 10001 01110",
    "7": "11111 00001 00010 00100 01000 01000 01000",
    "8": "01110 10001 10001 01110 10001 10001 01110",
    "9": "01110 10001 10001 01111 00001 00010 01100",
    "A": "01110 10001 10001 11111 10001 10001 10001",
    "B": "11110 10001 10001 11110 10001 10001 11110",
    "C": "01110 10001 10000 10000 10000 10001 01110",
    "D": "11100 10010 10001 10001 10001 10010 11100",
    "E": "11111 10000 10000 11110 10000 10000 11111",
    "F": "11111 10000 10000 11110 10000 10000 10000",
    "G": "01110 10001 10000 10111 10001 10001 01111",
    "H": "10001 10001 10001 11111 10001 10001 10001",
    "I": "01110 00100 00100 00100 00100 00100 01110",
    "J": "00111 00010 00010 00010 00010 10010 01100",
    "K": "10001 10010 10100 11000 10100 10010 10001",
    "L": "10000 10000 10000 10000 10000 10000 11111",
    "M": "10001 11011 10101 10101 10001 10001 10001",
    "N": "10001 10001 11001 10101 10011 10001 10001",
    "O": "01110 10001 10001 10001 10001 10001 01110",
    "P": "11110 10001 10001 11110 10000 10000 10000",
    "Q": "01110 10001 10001 10001 10101 10010 01101",
    "R": "11110 10001 10001 11110 10100 10010 10001",
    "S": "01111 10000 10000 01110 00001 00001 11110",
    "T": "11111 00100 00100 00100 00100 00100 00100",
    "U": "10001 10001 10001 10001 10001 10001 01110",
    "V": "10001 10001 10001 10001 10001 01010 00100",
    "W": "10001 10001 10001 10101 10101 10101 01010",
    "X": "10001 10001 01010 00100 01010 10001 10001",
    "Y": "10001 10001 10001 01010 00100 00100 00100",
    "Z": "11111 00001 00010 00100 01000 10000 11111",
    ".": "00000 00000 00000 00000 00000 01100 01100",
    ":": "00000 01100 01100 00000 01100 01100 00000",
    "-": "00000 00000 00000 11111 00000 00000 00000",
    "_": "00000 00000 00000 00000 00000 00000 11111",
    "%": "11000 11001 00010 00100 01000 10011 00011",
    "/": "00000 00001 00010 00100 01000 10000 00000",
    " ": "00000 00000 00000 00000 00000 00000 00000",
    "?": "01110 10001 00001 00010 00100 00000 00100",
}

GLYPH_W, GLYPH_H = 5, 7
ADVANCE = GLYPH_W + 1


def _glyph(ch: str) -> np.ndarray:
    rows = _GLYPHS.get(ch.upper(), _GLYPHS["?"]).split()
    return np.array([[c == "1" for c in r] for r in rows], dtype=bool)


def render_text(text: str) -> np.ndarray:
    """Boolean bitmap of ``text``, 7 rows high, one blank column between glyphs."""
    if not text:
        return np.zeros((GLYPH_H, 0), dtype=bool)
    out = np.zeros((GLYPH_H, ADVANCE * len(text) - 1), dtype=bool)
    for k, ch in enumerate(text):
        out[:, k * ADVANCE : k * ADVANCE + GLYPH_W] = _glyph(ch)
    return out


@dataclass(frozen=True)
class OverlaySpec:
    color: tuple[int, int, int] = (0, 255, 0)
    stroke: int = 2
    text_color: tuple[int, int, int] = (0, 0, 0)
    labels: bool = True

    def __post_init__(self):
        if self.stroke < 1:
            raise ValidationError("stroke width must be at least 1 pixel")
        for c in (*self.color, *self.text_color):
            if not 0 <= c <= 255:
                raise ValidationError("colour channels must lie in [0, 255]")


def _pixel_span(lo: float, hi: float, limit: int):
    a = max(0, int(math.floor(lo)))
    b = min(limit - 1, int(math.ceil(hi)) - 1)
    return a, b


def draw_box(pixels: np.ndarray, box, spec: OverlaySpec) -> None:
    """Draw a rectangle outline in place; the stroke grows inward from the box edge."""
    h, w = pixels.shape[:2]
    c0, c1 = _pixel_span(box.x_min, box.x_max, w)
    r0, r1 = _pixel_span(box.y_min, box.y_max, h)
    if c1 < c0 or r1 < r0:
        return
    s = spec.stroke
    color = np.array(spec.color, dtype=np.uint8)
    pixels[r0 : min(r0 + s, r1 + 1), c0 : c1 + 1] = color
    pixels[max(r1 - s + 1, r0) : r1 + 1, c0 : c1 + 1] = color
    pixels[r0 : r1 + 1, c0 : min(c0 + s, c1 + 1)] = color
    pixels[r0 : r1 + 1, max(c1 - s + 1, c0) : c1 + 1] = color


def draw_label(pixels: np.ndarray, box, text: str, spec: OverlaySpec) -> None:
    """Filled tag in the box colour with the text on it, above the box when it fits."""
    h, w = pixels.shape[:2]
    bitmap = render_text(text)
    tag_h, tag_w = GLYPH_H + 2, bitmap.shape[1] + 2
    left = max(0, int(math.floor(box.x_min)))
    top = int(math.floor(box.y_min)) - tag_h
    if top < 0:
        top = max(0, int(math.floor(box.y_min)))
    r1, c1 = min(h, top + tag_h), min(w, left + tag_w)
    if r1 <= top or c1 <= left:
        return
    pixels[top:r1, left:c1] = np.array(spec.color, dtype=np.uint8)
    glyphs = bitmap[: r1 - top - 1, : c1 - left - 1]
    region = pixels[top + 1 : top + 1 + glyphs.shape[0], left + 1 : left + 1 + glyphs.shape[1]]
    region[glyphs] = np.array(spec.text_color, dtype=np.uint8)


def render_overlay(pixels, boxes, spec: OverlaySpec = OverlaySpec(), label_map=None) -> np.ndarray:
    """Copy of ``pixels`` with each ``ScoredBox`` drawn; boxes are drawn before labels."""
    out = check_rgb(pixels).copy()
    for b in boxes:
        draw_box(out, b.box, spec)
    if spec.labels:
        for b in boxes:
            name = label_map.name_of(b.label_id) if label_map is not None else str(b.label_id)
            draw_label(out, b.box, f"{name}: {b.score:.2f}", spec)
    return out
