"""Image files: the IMG1 raw float format and 8-bit binary PGM import.

IMG1 layout: 8-byte magic ``RLALIGN1``, u32 LE height, u32 LE width, then
height*width float32 LE intensities in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, IOFailure
from .imgcore import as_image

IMG1_MAGIC = b"RLALIGN1"
_HEADER = struct.Struct("<8sII")


def encode_img1(img) -> bytes:
    img = as_image(img)
    h, w = img.shape
    return _HEADER.pack(IMG1_MAGIC, h, w) + img.astype("<f4").tobytes()


def decode_img1(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise FormatError("IMG1 file truncated in header")
    magic, h, w = _HEADER.unpack_from(data)
    if magic != IMG1_MAGIC:
        raise FormatError(f"bad IMG1 magic {magic!r}")
    expected = _HEADER.size + 4 * h * w
    if len(data) != expected or h == 0 or w == 0:
        raise FormatError(f"IMG1 payload size {len(data)} does not match {h}x{w}")
    pixels = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    return pixels.reshape(h, w).astype(np.float64)


def write_img1(path, img) -> None:
    try:
        Path(path).write_bytes(encode_img1(img))
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


def read_img1(path) -> np.ndarray:
    return decode_img1(_read_bytes(path))


def decode_pgm(data: bytes) -> np.ndarray:
    """Parse a binary (P5) PGM with maxval ≤ 255 and map intensities to [0, 1]."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("PGM header truncated")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise FormatError(f"unsupported PGM type {tokens[0]!r}, need P5")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("malformed PGM header") from exc
    if not 0 < maxval <= 255:
        raise FormatError(f"only 8-bit PGM supported, maxval={maxval}")
    raw = data[pos:pos + w * h]
    if len(raw) != w * h or w == 0 or h == 0:
        raise FormatError("PGM pixel data truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w) / 255.0


def encode_pgm(img) -> bytes:
    img = as_image(img)
    h, w = img.shape
    pixels = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes()


def read_image(path) -> np.ndarray:
    """Read an IMG1 or P5 PGM file, sniffing the format from its magic bytes."""
    data = _read_bytes(path)
    if data.startswith(IMG1_MAGIC):
        return decode_img1(data)
    if data.startswith(b"P5"):
        return decode_pgm(data)
    raise FormatError(f"{path}: neither IMG1 nor P5 PGM")
