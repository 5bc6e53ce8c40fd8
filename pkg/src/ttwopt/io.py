"""File formats: DTEN1 binary tensors, binary PPM images, trace CSV.

DTEN1 layout::

    b"DTEN1" | u32 N | u32 dims[N] | float64 payload[prod(dims)]

All integers and floats little-endian; payload in colexicographic order.
"""
from __future__ import annotations

import contextlib
import csv
import os
import re
import struct
import tempfile

import numpy as np

from .tensor import as_tensor, from_flat

__all__ = [
    "FormatError",
    "MAGIC",
    "read_tensor",
    "write_tensor",
    "read_ppm",
    "write_ppm",
    "write_trace_csv",
    "atomic_output",
]

MAGIC = b"DTEN1"


class FormatError(ValueError):
    """Malformed or unsupported file contents."""


@contextlib.contextmanager
def atomic_output(path, mode="wb"):
    """Write to a temp file beside ``path`` and rename it into place on success."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": ""})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_tensor(path, t) -> None:
    t = as_tensor(t)
    if not np.all(np.isfinite(t)):
        raise FormatError("refusing to write non-finite values")
    header = MAGIC + struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape)
    payload = t.ravel(order="F").astype("<f8").tobytes()
    with atomic_output(path) as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise FormatError(f"{path}: truncated header")
    (ndim,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if ndim < 1 or len(data) < pos + 4 * ndim:
        raise FormatError(f"{path}: truncated or invalid header (N={ndim})")
    dims = struct.unpack_from(f"<{ndim}I", data, pos)
    pos += 4 * ndim
    if min(dims) < 1:
        raise FormatError(f"{path}: dimensions must be >= 1, got {dims}")
    need = 8 * int(np.prod(dims, dtype=np.int64))
    have = len(data) - pos
    if have < need:
        raise FormatError(f"{path}: truncated payload ({have} bytes, need {need})")
    if have > need:
        raise FormatError(f"{path}: {have - need} trailing bytes after payload")
    values = np.frombuffer(data, dtype="<f8", offset=pos).astype(np.float64)
    return from_flat(values, dims)


_PPM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def read_ppm(path) -> np.ndarray:
    """Binary P6 image with maxval 255 as an ``(H, W, 3)`` float tensor."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(v) for v in fields[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: empty image")
    pos += 1  # single whitespace byte before the raster
    need = width * height * 3
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise FormatError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).astype(np.float64)


def write_ppm(path, t) -> None:
    """Write an ``(H, W, 3)`` tensor as P6, clamping to [0, 255] and rounding half away from zero."""
    t = as_tensor(t)
    if t.ndim != 3 or t.shape[2] != 3:
        raise FormatError(f"PPM needs an (H, W, 3) tensor, got {t.shape}")
    if np.isnan(t).any():
        raise FormatError("refusing to write NaN pixels")
    clipped = np.clip(t, 0.0, 255.0)
    pixels = np.floor(clipped + 0.5).astype(np.uint8)
    h, w, _ = t.shape
    with atomic_output(path) as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def write_trace_csv(path, trace) -> None:
    """Iteration trace as CSV ``iter,f,gnorm,step``; row 0 is the starting point."""
    with atomic_output(path, "w") as fh:
        out = csv.writer(fh)
        out.writerow(["iter", "f", "gnorm", "step"])
        if trace.records or np.isfinite(trace.f0):
            out.writerow([0, repr(trace.f0), repr(trace.gnorm0), repr(0.0)])
        for r in trace.records:
            out.writerow([r.iteration, repr(r.f), repr(r.gnorm), repr(r.step)])
