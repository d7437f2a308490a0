"""Canonical JSON encoding shared by every file format the toolkit writes."""

import json
import math

from .imageio import atomic_write_bytes


def num(x):
    """Integral floats are written as ints so hand-written fixtures round-trip."""
    if isinstance(x, float) and math.isfinite(x) and x.is_integer() and abs(x) < 2**53:
        return int(x)
    return x


def dumps(obj) -> bytes:
    return (json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n").encode("utf-8")


def write_json(path, obj) -> None:
    atomic_write_bytes(path, dumps(obj))


def loads(text, error_cls, what="JSON"):
    """Parse JSON, re-raising decode failures as ``error_cls`` with line/column context."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise error_cls(f"{what} is not valid UTF-8 (byte {exc.start})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise error_cls(f"{what} parse error: {exc.msg}", where=f"line {exc.lineno}, column {exc.colno}") from None


def read_json(path, error_cls, what="JSON"):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise error_cls(f"cannot read {what} {path}: {exc.strerror or exc}") from None
    return loads(data, error_cls, what)
