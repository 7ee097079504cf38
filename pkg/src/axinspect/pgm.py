"""Binary PGM (P5) reading and writing, maxval 255."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(image))


def encode_pgm(image: np.ndarray) -> bytes:
    if image.ndim != 2:
        raise PgmError(f"PGM images are 2-D, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise PgmError(f"PGM payload must be uint8, got {image.dtype}")
    h, w = image.shape
    return b"P5\n%d %d\n255\n" % (w, h) + image.tobytes()


def read_pgm(path: str | Path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def decode_pgm(raw: bytes) -> np.ndarray:
    """Parse a binary P5 payload; comments and arbitrary whitespace allowed."""
    buf = io.BytesIO(raw)
    if buf.read(2) != b"P5":
        raise PgmError("not a binary PGM (P5) payload")

    def next_token() -> bytes:
        tok = b""
        while True:
            ch = buf.read(1)
            if ch == b"":
                raise PgmError("truncated PGM header")
            if ch == b"#":
                buf.readline()
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise PgmError(f"malformed PGM header: {exc}") from exc
    if maxval != 255:
        raise PgmError(f"only maxval 255 supported, got {maxval}")
    data = buf.read(width * height)
    if len(data) != width * height:
        raise PgmError(f"expected {width * height} pixels, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width)
