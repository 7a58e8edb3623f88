"""Dense-array primitives shared by the CAM and statistics modules.

Arrays are plain numpy ndarrays, float32 by default (float64 inputs stay
float64 so callers can keep extra precision mid-pipeline).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError


def _as_float(t) -> np.ndarray:
    a = np.asarray(t)
    if a.dtype not in (np.float32, np.float64):
        a = a.astype(np.float32)
    return a


def _src_coords(src_len: int, dst_len: int) -> np.ndarray:
    # Corner-aligned mapping: destination d samples source d*(S-1)/(D-1).
    if dst_len == 1:
        return np.zeros(1)
    return np.arange(dst_len) * ((src_len - 1) / (dst_len - 1))


def bilinear_resize(src, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D array with corner-aligned bilinear interpolation.

    Corner alignment keeps the four image corners fixed, so resizing to the
    same shape is an exact identity and constant fields stay constant.
    """
    a = _as_float(src)
    if a.ndim != 2:
        raise DimensionError(f"bilinear_resize needs a 2-D array, got ndim={a.ndim}")
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"output shape must be positive, got {out_h}x{out_w}")
    h, w = a.shape
    rows = _src_coords(h, out_h)
    cols = _src_coords(w, out_w)
    r0 = np.minimum(np.floor(rows).astype(np.intp), h - 1)
    c0 = np.minimum(np.floor(cols).astype(np.intp), w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    # lerp form (a0 + f*(a1-a0)) keeps constants exact and output within
    # the input's [min, max] range
    a64 = a.astype(np.float64, copy=False)
    top = a64[np.ix_(r0, c0)]
    top = top + fc * (a64[np.ix_(r0, c1)] - top)
    bot = a64[np.ix_(r1, c0)]
    bot = bot + fc * (a64[np.ix_(r1, c1)] - bot)
    out = top + fr * (bot - top)
    return out.astype(a.dtype, copy=False)


def minmax_normalize(t) -> np.ndarray:
    """Rescale to [0, 1]; a constant array maps to all zeros, never NaN."""
    a = _as_float(t)
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def relu(t) -> np.ndarray:
    """Elementwise max(x, 0)."""
    a = _as_float(t)
    return np.maximum(a, 0)
