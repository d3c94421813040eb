"""Binary PGM (P5, maxval 255) reading and writing.

Real images in [0, 1] are stored as ``round(v * 255)``. Masks are stored
black-on-white: boundary (1) -> 0, background (0) -> 255.
"""
from __future__ import annotations

import os

import numpy as np


class PGMError(IOError):
    pass


def write_pgm(path, grid, mask=False):
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError(f"PGM grid must be 2-D, got shape {grid.shape}")
    if mask:
        if not np.all((grid == 0) | (grid == 1)):
            raise ValueError("mask must be binary")
        payload = np.where(grid == 1, 0, 255).astype(np.uint8)
    else:
        if np.any(grid < 0) or np.any(grid > 1) or not np.all(np.isfinite(grid)):
            raise ValueError("image values must lie in [0, 1]")
        payload = np.rint(grid * 255).astype(np.uint8)
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(payload.tobytes())


def _header_tokens(data, path):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise PGMError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise PGMError(f"{path}: truncated PGM header")
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def read_pgm_raw(path):
    """Return the uint8 raster of a P5 file."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _header_tokens(data, path)
    if tokens[0] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PGMError(f"{path}: malformed PGM header") from exc
    if w <= 0 or h <= 0 or maxval != 255:
        raise PGMError(f"{path}: unsupported PGM geometry {w}x{h} maxval {maxval}")
    payload = data[offset : offset + w * h]
    if len(payload) != w * h:
        raise PGMError(f"{path}: truncated payload, expected {w * h} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)


def read_pgm(path, mask=False):
    raw = read_pgm_raw(os.fspath(path))
    if mask:
        return (raw < 128).astype(np.uint8)
    return raw.astype(np.float32) / 255.0
