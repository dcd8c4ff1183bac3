"""Binary feature-stack files.

Layout (all little-endian)::

    magic   4 bytes  b"FSTK"
    version uint32   1
    layers  uint32   L + 1
    frames  uint32   T
    dim     uint32   D
    dtype   uint32   0 = float32, 1 = float64
    data    layers * frames * dim values, row-major
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FSTK"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def dumps_stack(stack):
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise ValueError("feature stack must be 3-D")
    code = _CODES.get(stack.dtype)
    if code is None:
        raise ValueError(f"unsupported dtype {stack.dtype}")
    header = _HEADER.pack(MAGIC, VERSION, *stack.shape, code)
    return header + np.ascontiguousarray(stack, dtype=_DTYPES[code]).tobytes()


def loads_stack(buf):
    if len(buf) < _HEADER.size:
        raise ValueError("truncated feature stack header")
    magic, version, layers, frames, dim, code = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError("not a feature stack file (bad magic)")
    if version != VERSION:
        raise ValueError(f"unsupported feature stack version {version}")
    if code not in _DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    dtype = _DTYPES[code]
    expected = layers * frames * dim * dtype.itemsize
    body = buf[_HEADER.size:]
    if len(body) != expected:
        raise ValueError(f"feature stack body has {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype=dtype).reshape(layers, frames, dim).astype(dtype.newbyteorder("="))


def write_stack(path, stack):
    Path(path).write_bytes(dumps_stack(stack))


def read_stack(path):
    return loads_stack(Path(path).read_bytes())
