"""EMP1: little-endian binary container for emulator parameters.

Layout::

    offset  size  field
    0       4     magic b"EMP1"
    4       4     u32 version (1)
    8       4     u32 in_channels
    12      4     u32 hidden_channels
    16      4     u32 n_pointwise_layers
    20      4     u32 out_channels
    24      4     u32 output_activation (0 = identity, 1 = sigmoid)
    28      ...   float32 tensors w0, b0, w1, b1, ... in C order

Tensor shapes follow from the header (see ``EmulatorSpec.layer_shapes``),
so the file carries no per-tensor framing.
"""

import struct

import numpy as np

from .emulator import ACTIVATIONS, EmulatorParams, EmulatorSpec
from .errors import ConfigError, FormatError

MAGIC = b"EMP1"
VERSION = 1
HEADER = struct.Struct("<4sIIIIII")
HEADER_SIZE = HEADER.size


def to_bytes(params):
    s = params.spec
    head = HEADER.pack(MAGIC, VERSION, s.in_channels, s.hidden_channels, s.n_pointwise_layers,
                       s.out_channels, ACTIVATIONS.index(s.output_activation))
    body = b"".join(t.astype("<f4", copy=False).tobytes(order="C") for t in params.tensors())
    return head + body


def from_bytes(buf):
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    if len(buf) < HEADER_SIZE:
        raise FormatError(f"truncated header ({len(buf)} of {HEADER_SIZE} bytes)", len(buf))
    _, version, c_in, hidden, n_pw, c_out, act = HEADER.unpack_from(buf)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if act >= len(ACTIVATIONS):
        raise FormatError(f"unknown activation code {act}", 24)
    try:
        spec = EmulatorSpec(c_in, hidden, n_pw, c_out, ACTIVATIONS[act])
    except ConfigError as exc:
        raise FormatError(f"invalid spec in header: {exc}", 8) from None
    shapes = spec.layer_shapes()
    sizes = []
    for s in shapes:
        sizes += [int(np.prod(s)), s[0]]
    need = 4 * sum(sizes)
    have = len(buf) - HEADER_SIZE
    if have < need:
        raise FormatError(f"truncated tensors ({have} of {need} bytes)", len(buf))
    if have > need:
        raise FormatError(f"{have - need} trailing bytes after tensors", HEADER_SIZE + need)
    flat = np.frombuffer(buf, dtype="<f4", offset=HEADER_SIZE).astype(np.float32)
    if not np.isfinite(flat).all():
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise FormatError("non-finite parameter", HEADER_SIZE + 4 * bad)
    tensors, k = [], 0
    all_shapes = [x for s in shapes for x in (s, (s[0],))]
    for shape, n in zip(all_shapes, sizes):
        tensors.append(flat[k:k + n].reshape(shape))
        k += n
    return EmulatorParams(spec, tensors[0::2], tensors[1::2])


def write_emp1(params, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(params))


def read_emp1(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
