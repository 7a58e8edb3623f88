"""Focus regions (top-saliency pixel sets) and their overlap ratios
against binary anatomy masks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class RatioRecord:
    """Overlap fractions for one (saliency map, anatomy mask) pair."""

    activation_ratio: float
    structure_ratio: float

    @property
    def difference(self) -> float:
        return self.activation_ratio - self.structure_ratio


def top_fraction_region(saliency, fraction: float) -> np.ndarray:
    """Binary mask of the floor(fraction * H * W) highest-saliency pixels.

    Ties are broken by row-major scan order: the earlier pixel wins.
    """
    s = np.asarray(saliency, dtype=np.float64)
    if s.ndim != 2:
        raise DimensionError(f"saliency map must be 2-D, got ndim={s.ndim}")
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    count = math.floor(fraction * s.size)
    if count == 0:
        raise ParameterError(
            f"fraction {fraction} selects zero pixels on a {s.shape} map"
        )
    flat = s.ravel()
    # stable sort on negated values: descending saliency, row-major ties
    order = np.argsort(-flat, kind="stable")[:count]
    region = np.zeros(s.size, dtype=np.uint8)
    region[order] = 1
    return region.reshape(s.shape)


def _check_binary(mask, name: str) -> np.ndarray:
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise ParameterError(f"{name} must be binary (0/1)")
    return m.astype(np.uint8)


def activation_ratio(region, mask) -> float:
    """Fraction of the focus region covered by the anatomy mask: |R & A| / |R|."""
    r = _check_binary(region, "focus region")
    a = _check_binary(mask, "anatomy mask")
    if r.shape != a.shape:
        raise DimensionError(f"region {r.shape} vs mask {a.shape} dims differ")
    n_region = int(r.sum())
    if n_region == 0:
        raise ParameterError("focus region is empty")
    return int((r & a).sum()) / n_region


def structure_ratio(mask) -> float:
    """Fraction of the whole image covered by the anatomy mask: |A| / (H*W)."""
    a = _check_binary(mask, "anatomy mask")
    return int(a.sum()) / a.size


def ratio_record(saliency, mask, fraction: float) -> RatioRecord:
    """Both overlap ratios for one saliency map at the given focus fraction."""
    region = top_fraction_region(saliency, fraction)
    return RatioRecord(
        activation_ratio=activation_ratio(region, mask),
        structure_ratio=structure_ratio(mask),
    )
