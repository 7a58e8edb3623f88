"""Overlay rendering: grayscale image, red-tinted focus region, green
anatomy boundary, written as binary PPM (P6) with deterministic bytes."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .focus import top_fraction_region
from .tensorops import minmax_normalize


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbor outside the mask; pixels on
    the image border count as boundary (the outside is not mask)."""
    m = np.asarray(mask).astype(bool)
    inner = np.zeros_like(m)
    inner[1:-1, 1:-1] = (
        m[1:-1, 1:-1]
        & m[:-2, 1:-1]
        & m[2:, 1:-1]
        & m[1:-1, :-2]
        & m[1:-1, 2:]
    )
    return (m & ~inner).astype(np.uint8)


def render_overlay(image, saliency, mask, out_path, fraction: float = 0.05) -> None:
    img = np.asarray(image, dtype=np.float64)
    sal = np.asarray(saliency, dtype=np.float64)
    msk = np.asarray(mask)
    if img.ndim != 2 or sal.shape != img.shape or msk.shape != img.shape:
        raise DimensionError(
            f"overlay needs matching 2-D inputs, got image {img.shape}, "
            f"saliency {sal.shape}, mask {msk.shape}"
        )
    gray = np.rint(minmax_normalize(img) * 255.0).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)
    # only positively salient pixels count as focus: a flat zero map draws
    # nothing rather than tinting the row-major tie-break prefix
    region = top_fraction_region(sal, fraction).astype(bool) & (sal > 0)
    rgb[region, 0] = 255
    boundary = mask_boundary(msk).astype(bool)
    rgb[boundary, 1] = 255
    h, w = gray.shape
    with open(out_path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
