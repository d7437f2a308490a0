"""Image reading and writing.

Binary PPM (P6) is handled here directly so fixtures decode identically
everywhere; PNG goes through Pillow.
"""

import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ImageFormatError


def _ppm_tokens(data, count, pos):
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (P6) file")
    (w, h, maxval), pos = _ppm_tokens(data, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError("non-numeric PPM header field") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"invalid PPM dimensions {w}x{h}")
    if not 0 < maxval < 256:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (8-bit only)")
    pos += 1  # single whitespace byte ends the header
    need = w * h * 3
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise ImageFormatError(f"PPM raster truncated: expected {need} bytes, got {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()
    if maxval != 255:
        pixels = np.rint(pixels.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return pixels


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = check_rgb(pixels)
    h, w = pixels.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def check_rgb(pixels) -> np.ndarray:
    """Validate an 8-bit three-channel buffer and return it as C-contiguous uint8."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        shape = "x".join(str(s) for s in arr.shape)
        raise ImageFormatError(f"expected an HxWx3 image, got shape {shape}")
    if arr.dtype != np.uint8:
        raise ImageFormatError(f"expected 8-bit channels, got dtype {arr.dtype}")
    return np.ascontiguousarray(arr)


def read_image(path) -> np.ndarray:
    """Load an image as an ``(H, W, 3)`` uint8 array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror or exc}") from None
    if data[:2] == b"P6":
        return decode_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        with Image.open(io.BytesIO(data)) as im:
            if im.mode not in ("RGB", "RGBA", "L", "P", "LA"):
                raise ImageFormatError(f"unsupported PNG mode {im.mode}")
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    raise ImageFormatError(f"{path}: unsupported image format (PPM P6 or PNG expected)")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_image(path, pixels: np.ndarray) -> None:
    """Write PNG when the suffix is ``.png``, PPM otherwise."""
    path = Path(path)
    pixels = check_rgb(pixels)
    if path.suffix.lower() == ".png":
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(pixels, "RGB").save(buf, format="PNG")
        atomic_write_bytes(path, buf.getvalue())
    else:
        atomic_write_bytes(path, encode_ppm(pixels))
