"""Tensor files and PGM images.

Tensor file layout: one ASCII header line ``DDBT1 <rank> <dim0> <dim1> ...``
terminated by ``\\n``, then the elements as little-endian float64 in row-major
order.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["FormatError", "read_tensor", "write_tensor", "read_pgm", "write_pgm", "read_mask", "read_array"]

MAGIC = b"DDBT1"


class FormatError(ValueError):
    """Malformed file contents."""


def write_tensor(path, x) -> None:
    x = np.asarray(x, dtype="<f8")
    header = " ".join([MAGIC.decode(), str(x.ndim)] + [str(d) for d in x.shape]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(x.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"\n")
    if end < 0:
        raise FormatError(f"{path}: missing header line")
    fields = blob[:end].split()
    if not fields or fields[0] != MAGIC:
        raise FormatError(f"{path}: not a DDBT1 tensor file")
    try:
        rank = int(fields[1])
        dims = tuple(int(d) for d in fields[2:])
    except (IndexError, ValueError):
        raise FormatError(f"{path}: malformed header {blob[:end]!r}") from None
    if rank != len(dims) or any(d < 0 for d in dims):
        raise FormatError(f"{path}: rank {rank} does not match dims {dims}")
    body = blob[end + 1:]
    count = int(np.prod(dims, dtype=np.int64))
    if len(body) != 8 * count:
        raise FormatError(f"{path}: expected {count} float64 values, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(dims).astype(np.float64)


def _pgm_tokens(blob: bytes, count: int):
    """First ``count`` header tokens and the offset just past the single whitespace after the last."""
    tokens = []
    pos = 0
    n = len(blob)
    while len(tokens) < count:
        while pos < n and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < n and blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos:pos + 1].isspace() and blob[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(blob[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Grayscale P2/P5 image scaled linearly to ``[0, 1]``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        tokens, offset = _pgm_tokens(blob, 4)
        magic = tokens[0]
        width, height, maxval = (int(t) for t in tokens[1:])
    except (FormatError, ValueError) as exc:
        raise FormatError(f"{path}: malformed PGM header ({exc})") from None
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: unsupported magic {magic!r}; expected P2 or P5")
    if not 0 < maxval <= 65535 or width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid dimensions or maxval")
    count = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = blob[offset:offset + count * dtype.itemsize]
        if len(raw) != count * dtype.itemsize:
            raise FormatError(f"{path}: truncated pixel data")
        pix = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    else:
        try:
            pix = np.array([int(v) for v in blob[offset - 1:].split()[:count]], dtype=np.float64)
        except ValueError:
            raise FormatError(f"{path}: non-integer pixel value") from None
        if pix.size != count:
            raise FormatError(f"{path}: expected {count} pixels, found {pix.size}")
    if np.any(pix > maxval):
        raise FormatError(f"{path}: pixel value exceeds maxval {maxval}")
    return pix.reshape(height, width) / maxval


def write_pgm(path, img, maxval: int = 255, binary: bool = True) -> None:
    """Clip to ``[0, 1]`` and quantize with round-half-even."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-d image, got shape {img.shape}")
    if not 0 < maxval <= 65535:
        raise ValueError(f"maxval must be in 1..65535, got {maxval}")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii"))
        if binary:
            fh.write(q.astype(">u2" if maxval > 255 else "u1").tobytes())
        else:
            for row in q:
                fh.write((" ".join(str(v) for v in row) + "\n").encode("ascii"))


def read_mask(path) -> np.ndarray:
    """Boolean mask from a PGM (threshold 0.5) or a tensor file (nonzero)."""
    arr = read_array(path)
    return arr >= 0.5 if str(path).lower().endswith(".pgm") else arr != 0


def read_array(path) -> np.ndarray:
    """Dispatch on extension: ``.pgm`` images, anything else a tensor file."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path)
    return read_tensor(path)
