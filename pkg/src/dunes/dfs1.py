"""DFS1: little-endian binary container for frame series.

Layout::

    offset  size  field
    0       4     magic b"DFS1"
    4       4     u32 version (1)
    8       4     u32 width    (columns)
    12      4     u32 height   (rows)
    16      4     u32 n_frames
    20      4     u32 dtype_code (0 = float32)
    24      4     f32 cell_size_m
    28      4     f32 frame_interval_days
    32      4     u32 manifest_len
    36      ...   manifest_len bytes of UTF-8 "key=value" lines
    ...           n_frames * height * width float32, frame-major, row-major
"""

import struct

import numpy as np

from .errors import FormatError
from .frames import FrameSeries

MAGIC = b"DFS1"
VERSION = 1
HEADER = struct.Struct("<4sIIIIIffI")
HEADER_SIZE = HEADER.size
DTYPES = {0: np.dtype("<f4")}


def encode_manifest(manifest):
    lines = []
    for k, v in manifest.items():
        k, v = str(k), str(v)
        if not k or "=" in k or "\n" in k or "\n" in v:
            raise ValueError(f"manifest entry {k!r} cannot be written as a key=value line")
        lines.append(f"{k}={v}\n")
    return "".join(lines).encode("utf-8")


def decode_manifest(blob, offset=0):
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"manifest is not UTF-8: {exc.reason}", offset + exc.start) from None
    out = {}
    pos = offset
    for line in text.splitlines(keepends=True):
        body = line.rstrip("\n")
        if body:
            if "=" not in body:
                raise FormatError(f"manifest line {body!r} has no '='", pos)
            k, v = body.split("=", 1)
            out[k] = v
        pos += len(line.encode("utf-8"))
    return out


def to_bytes(series):
    n, rows, cols = series.frames.shape
    man = encode_manifest(series.manifest)
    head = HEADER.pack(MAGIC, VERSION, cols, rows, n, 0, series.cell_size,
                       series.frame_interval_days, len(man))
    return head + man + series.frames.astype("<f4", copy=False).tobytes(order="C")


def from_bytes(buf):
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    if len(buf) < HEADER_SIZE:
        raise FormatError(f"truncated header ({len(buf)} of {HEADER_SIZE} bytes)", len(buf))
    _, version, cols, rows, n, dtype_code, cell, interval, man_len = HEADER.unpack_from(buf)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dtype_code not in DTYPES:
        raise FormatError(f"unknown dtype code {dtype_code}", 20)
    if n < 1:
        raise FormatError("series has zero frames", 16)
    if not interval > 0:
        raise FormatError(f"frame interval must be positive, got {interval}", 28)
    man_end = HEADER_SIZE + man_len
    if len(buf) < man_end:
        raise FormatError(f"truncated manifest ({len(buf) - HEADER_SIZE} of {man_len} bytes)",
                          len(buf))
    manifest = decode_manifest(buf[HEADER_SIZE:man_end], HEADER_SIZE)
    dtype = DTYPES[dtype_code]
    need = n * rows * cols * dtype.itemsize
    have = len(buf) - man_end
    if have < need:
        raise FormatError(f"truncated payload ({have} of {need} bytes)", len(buf))
    if have > need:
        raise FormatError(f"{have - need} trailing bytes after payload", man_end + need)
    frames = np.frombuffer(buf, dtype=dtype, count=n * rows * cols, offset=man_end)
    frames = frames.reshape(n, rows, cols).astype(np.float32)
    if not np.isfinite(frames).all():
        bad = int(np.flatnonzero(~np.isfinite(frames.ravel()))[0])
        raise FormatError("non-finite value in payload", man_end + 4 * bad)
    return FrameSeries(frames, float(cell), float(interval), manifest)


def write_dfs1(series, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(series))


def read_dfs1(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
