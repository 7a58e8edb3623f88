"""Seeded synthetic image datasets for end-to-end runs.

Every image is background noise with a disk-shaped "anatomy" at a random
position; class-1 images render the disk brightly (the label cause), class-0
images leave it at background level.  The mask marks the disk either way, so
every sample has an anatomy annotation just like the real datasets.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bundle import write_bundle

ANATOMY_NAME = "disk"


def generate_dataset(
    n: int = 200,
    size: int = 56,
    seed: int = 0,
    contrast: float = 0.7,
    case_fraction: float = 0.4,
):
    """Returns (images (N, H, W) float32 in [0, 1], labels (N,), masks (N, H, W))."""
    rng = np.random.default_rng(seed)
    n_case = int(round(n * case_fraction))
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_case] = 1
    rng.shuffle(labels)

    images = np.empty((n, size, size), dtype=np.float32)
    masks = np.empty((n, size, size), dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    r_lo = max(2, size // 11)
    r_hi = max(r_lo + 1, size // 6)
    for i in range(n):
        img = rng.normal(0.25, 0.08, size=(size, size))
        radius = rng.integers(r_lo, r_hi + 1)
        margin = radius + 2
        cy = rng.integers(margin, size - margin)
        cx = rng.integers(margin, size - margin)
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
        if labels[i] == 1:
            img[disk] += contrast
        images[i] = np.clip(img, 0.0, 1.0)
        masks[i] = disk.astype(np.uint8)
    return images, labels, masks


def write_synthetic_dataset(
    out_dir,
    n: int = 200,
    size: int = 56,
    seed: int = 0,
    contrast: float = 0.7,
    case_fraction: float = 0.4,
) -> Path:
    """Materialize a synthetic dataset as bundles + manifest; returns the
    manifest path."""
    out_dir = Path(out_dir)
    bundles = out_dir / "bundles"
    bundles.mkdir(parents=True, exist_ok=True)
    images, labels, masks = generate_dataset(n, size, seed, contrast, case_fraction)
    samples = []
    for i in range(n):
        sample_id = f"s{i:04d}"
        rel = f"bundles/{sample_id}.camb"
        write_bundle(
            out_dir / rel,
            {
                "image": images[i],
                f"mask.{ANATOMY_NAME}": masks[i].astype(np.float32),
            },
        )
        samples.append(
            {
                "id": sample_id,
                "label": int(labels[i]),
                "bundle": rel,
                "masks": [ANATOMY_NAME],
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps({"dataset": "synthetic", "samples": samples}, indent=1)
    )
    return manifest_path
