"""Per-pixel kernels: HSV conversion, colour masking and 4-connected labelling.

Each hot kernel exists twice, a numba version (``*_jit``) and a pure-numpy
version (``*_numpy``). Both produce identical output; the public wrappers
pick one according to :data:`algaeval._jit.USE_JIT`.

HSV follows the hexcone model: hue in degrees [0, 360), saturation and value
in [0, 1]. For a pixel with channel max ``M``, min ``m`` and chroma
``C = M - m`` (all on the 0..255 scale)::

    hue = 0                          if C == 0
        = 60 * (((g - b) / C) % 6)   if M == r
        = 60 * ((b - r) / C + 2)     if M == g
        = 60 * ((r - g) / C + 4)     otherwise
    sat = C / M  (0 when M == 0)
    val = M / 255
"""

import numpy as np

from . import _jit
from ._jit import njit

_BIG = np.iinfo(np.int64).max


def rgb_to_hsv(rgb):
    """Float HSV planes ``(h, s, v)`` for an ``(..., 3)`` array on the 0..255 scale."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    c = mx - mn
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(
        mx == r,
        60.0 * np.mod((g - b) / safe_c, 6.0),
        np.where(mx == g, 60.0 * ((b - r) / safe_c + 2.0), 60.0 * ((r - g) / safe_c + 4.0)),
    )
    h = np.where(c > 0, h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(mx > 0, c / np.where(mx > 0, mx, 1.0), 0.0)
    v = mx / 255.0
    return h, s, v


def hsv_to_rgb(h, s, v):
    """Inverse of :func:`rgb_to_hsv`; returns float RGB on the 0..255 scale."""
    h = np.mod(np.asarray(h, dtype=np.float64), 360.0)
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64) * 255.0
    c = v * s
    hp = h / 60.0
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    sector = np.floor(hp).astype(np.int64) % 6
    zeros = np.zeros_like(c)
    # (r, g, b) before adding the offset m, per hexcone sector
    table_r = np.stack([c, x, zeros, zeros, x, c])
    table_g = np.stack([x, c, c, x, zeros, zeros])
    table_b = np.stack([zeros, zeros, x, c, c, x])
    sel = sector[np.newaxis, ...]
    r = np.take_along_axis(table_r, sel, axis=0)[0]
    g = np.take_along_axis(table_g, sel, axis=0)[0]
    b = np.take_along_axis(table_b, sel, axis=0)[0]
    m = v - c
    return np.stack([r + m, g + m, b + m], axis=-1)


# ---------------------------------------------------------------- colour mask


def _hue_in_range_numpy(h, lo, hi):
    if lo <= hi:
        return (h >= lo) & (h <= hi)
    return (h >= lo) | (h <= hi)


def color_mask_numpy(pixels, hue_lo, hue_hi, sat_min, val_min):
    h, s, v = rgb_to_hsv(pixels)
    return _hue_in_range_numpy(h, hue_lo, hue_hi) & (s >= sat_min) & (v >= val_min)


@njit(cache=True)
def color_mask_jit(pixels, hue_lo, hue_hi, sat_min, val_min):
    rows, cols = pixels.shape[0], pixels.shape[1]
    out = np.zeros((rows, cols), dtype=np.bool_)
    wrap = hue_lo > hue_hi
    for i in range(rows):
        for j in range(cols):
            r = np.float64(pixels[i, j, 0])
            g = np.float64(pixels[i, j, 1])
            b = np.float64(pixels[i, j, 2])
            mx = max(r, g, b)
            mn = min(r, g, b)
            c = mx - mn
            if c > 0:
                if mx == r:
                    h = 60.0 * (((g - b) / c) % 6.0)
                elif mx == g:
                    h = 60.0 * ((b - r) / c + 2.0)
                else:
                    h = 60.0 * ((r - g) / c + 4.0)
                if h >= 360.0:
                    h -= 360.0
            else:
                h = 0.0
            s = c / mx if mx > 0 else 0.0
            v = mx / 255.0
            if wrap:
                hue_ok = h >= hue_lo or h <= hue_hi
            else:
                hue_ok = h >= hue_lo and h <= hue_hi
            out[i, j] = hue_ok and s >= sat_min and v >= val_min
    return out


def color_mask(pixels, hue_lo, hue_hi, sat_min, val_min):
    """Boolean mask of pixels whose HSV value falls inside the thresholds."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if _jit.USE_JIT:
        return color_mask_jit(pixels, float(hue_lo), float(hue_hi), float(sat_min), float(val_min))
    return color_mask_numpy(pixels, hue_lo, hue_hi, sat_min, val_min)


# ---------------------------------------------------------------- labelling


@njit(cache=True)
def label4_jit(mask):
    rows, cols = mask.shape
    labels = np.zeros((rows, cols), dtype=np.int32)
    stack = np.empty(rows * cols, dtype=np.int64)
    n = 0
    for i0 in range(rows):
        for j0 in range(cols):
            if not mask[i0, j0] or labels[i0, j0] != 0:
                continue
            n += 1
            labels[i0, j0] = n
            top = 0
            stack[top] = i0 * cols + j0
            top += 1
            while top > 0:
                top -= 1
                p = stack[top]
                i = p // cols
                j = p - i * cols
                if i > 0 and mask[i - 1, j] and labels[i - 1, j] == 0:
                    labels[i - 1, j] = n
                    stack[top] = p - cols
                    top += 1
                if i + 1 < rows and mask[i + 1, j] and labels[i + 1, j] == 0:
                    labels[i + 1, j] = n
                    stack[top] = p + cols
                    top += 1
                if j > 0 and mask[i, j - 1] and labels[i, j - 1] == 0:
                    labels[i, j - 1] = n
                    stack[top] = p - 1
                    top += 1
                if j + 1 < cols and mask[i, j + 1] and labels[i, j + 1] == 0:
                    labels[i, j + 1] = n
                    stack[top] = p + 1
                    top += 1
    return labels, n


def label4_numpy(mask):
    """Min-index propagation with pointer jumping; labels numbered in raster order."""
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    if not mask.any():
        return np.zeros((rows, cols), dtype=np.int32), 0
    idx = np.arange(rows * cols, dtype=np.int64).reshape(rows, cols)
    lab = np.where(mask, idx, _BIG)
    vert = mask[1:, :] & mask[:-1, :]
    horiz = mask[:, 1:] & mask[:, :-1]
    while True:
        new = lab.copy()
        np.minimum(new[1:, :], np.where(vert, lab[:-1, :], _BIG), out=new[1:, :])
        np.minimum(new[:-1, :], np.where(vert, lab[1:, :], _BIG), out=new[:-1, :])
        np.minimum(new[:, 1:], np.where(horiz, lab[:, :-1], _BIG), out=new[:, 1:])
        np.minimum(new[:, :-1], np.where(horiz, lab[:, 1:], _BIG), out=new[:, :-1])
        # a pixel's label is the index of a pixel in the same component, so
        # following it never leaves the component
        flat = new.ravel()
        fg = flat != _BIG
        flat[fg] = flat[flat[fg]]
        if np.array_equal(new, lab):
            break
        lab = new
    roots = np.unique(lab[mask])
    out = np.zeros((rows, cols), dtype=np.int32)
    out[mask] = (np.searchsorted(roots, lab[mask]) + 1).astype(np.int32)
    return out, int(roots.size)


def label4(mask):
    """4-connected component labels (0 = background) and the component count.

    Components are numbered 1..n in raster order of their first pixel.
    """
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if _jit.USE_JIT:
        labels, n = label4_jit(mask)
        return labels, int(n)
    return label4_numpy(mask)


def component_stats(labels, n):
    """Pixel count and inclusive row/col extents for components 1..n.

    Returns ``(count, row_min, row_max, col_min, col_max)``, each of length n,
    indexed by ``label - 1``.
    """
    flat = labels.ravel()
    fg = flat > 0
    lab = flat[fg].astype(np.int64) - 1
    rr, cc = np.divmod(np.flatnonzero(fg), labels.shape[1])
    count = np.bincount(lab, minlength=n)
    row_min = np.full(n, np.iinfo(np.int64).max)
    col_min = np.full(n, np.iinfo(np.int64).max)
    row_max = np.full(n, -1)
    col_max = np.full(n, -1)
    np.minimum.at(row_min, lab, rr)
    np.minimum.at(col_min, lab, cc)
    np.maximum.at(row_max, lab, rr)
    np.maximum.at(col_max, lab, cc)
    return count, row_min, row_max, col_min, col_max
