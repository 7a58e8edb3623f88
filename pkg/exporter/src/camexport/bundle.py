"""CAMB bundle writer.

The format is the interchange contract with the analysis core, so it is
implemented here independently rather than imported from it:
magic "CAMB", version u8=1, entry count u32 LE; per entry name_len u16 LE,
UTF-8 name, dtype u8 (0 = f32), ndim u8, ndim x u32 LE dims, then the raw
float32 little-endian row-major payload.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CAMB"
VERSION = 1
DTYPE_F32 = 0


def write_bundle(path, entries: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(entries)))
        for name, tensor in entries.items():
            arr = np.ascontiguousarray(tensor, dtype="<f4")
            if arr.ndim == 0:
                arr = arr.reshape(1)
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())
