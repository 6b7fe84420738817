"""Flat binary checkpoint for a ParamSet.

Layout (little-endian throughout):

    8 bytes   magic ``MOBCKPT1``
    4 bytes   uint32 tensor count
    per tensor:
        2 bytes          uint16 name length in bytes
        name bytes       UTF-8
        1 byte           uint8 ndim
        ndim * 8 bytes   uint64 dims
        prod(dims) * 8   float64 values, row-major

Round-trips bit-exactly at double precision.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import ParamSet

MAGIC = b"MOBCKPT1"


def save_checkpoint(path, params: ParamSet):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def load_checkpoint(path) -> ParamSet:
    params = ParamSet()
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            params.register(name, data.astype(np.float64))
    return params
