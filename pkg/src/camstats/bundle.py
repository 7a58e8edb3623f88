"""CAMB tensor-bundle files: the on-disk interchange format.

Layout (all integers little-endian):
    magic   4 bytes  "CAMB"
    version u8       1
    count   u32      number of entries
per entry:
    name_len u16, name UTF-8 bytes
    dtype    u8      0 = float32 (the only supported code)
    ndim     u8
    dims     ndim x u32
    payload  prod(dims) float32 values, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    BundleError,
    DimOverflowError,
    TruncatedBundleError,
    UnknownDtypeError,
)

MAGIC = b"CAMB"
VERSION = 1
DTYPE_F32 = 0
_MAX_ELEMENTS = 1 << 31


def write_bundle(path, entries) -> None:
    """Write named tensors to a CAMB file.  Values are stored as float32."""
    items = list(entries.items()) if hasattr(entries, "items") else list(entries)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(items)))
        for name, tensor in items:
            arr = np.ascontiguousarray(tensor, dtype="<f4")
            if arr.ndim == 0:
                arr = arr.reshape(1)
            name_bytes = name.encode("utf-8")
            if len(name_bytes) > 0xFFFF:
                raise BundleError(f"entry name too long: {len(name_bytes)} bytes")
            if arr.ndim > 0xFF:
                raise BundleError(f"too many dimensions: {arr.ndim}")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedBundleError(
            f"file ended while reading {what}: wanted {n} bytes, got {len(data)}"
        )
    return data


def read_bundle(path) -> dict[str, np.ndarray]:
    """Read a CAMB file into a dict of float32 arrays."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
        version, count = struct.unpack("<BI", _read_exact(fh, 5, "header"))
        if version != VERSION:
            raise BundleError(f"{path}: unsupported version {version}")
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "entry name").decode("utf-8")
            dtype, ndim = struct.unpack("<BB", _read_exact(fh, 2, "entry header"))
            if dtype != DTYPE_F32:
                raise UnknownDtypeError(f"{path}: entry {name!r} has dtype code {dtype}")
            dims = struct.unpack(
                f"<{ndim}I", _read_exact(fh, 4 * ndim, f"dims of {name!r}")
            )
            if ndim == 0 or any(d == 0 for d in dims):
                raise DimOverflowError(f"{path}: entry {name!r} has empty dims {dims}")
            n_elem = 1
            for d in dims:
                n_elem *= d
            if n_elem > _MAX_ELEMENTS:
                raise DimOverflowError(
                    f"{path}: entry {name!r} declares {n_elem} elements"
                )
            payload = _read_exact(fh, 4 * n_elem, f"payload of {name!r}")
            if name in entries:
                raise BundleError(f"{path}: duplicate entry {name!r}")
            entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        return entries
