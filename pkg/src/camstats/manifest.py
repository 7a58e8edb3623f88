"""Dataset manifests: a JSON file listing samples, each pointing at a CAMB
bundle.

Schema:
    {
      "dataset": "optional name",
      "samples": [
        {"id": str, "label": 0 or 1, "bundle": "relative/path.camb",
         "masks": ["anatomy", ...]}
      ]
    }

Bundle entry names: "image" (H x W, or C x H x W for exported color models),
"mask.<anatomy>" per anatomy listed in "masks", and in bundle mode "acts"
(K x h x w), "grads" (K x h x w), "score" (scalar), optionally
"scorecam_scores" (K).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import BundleError, read_bundle
from .errors import ManifestError

log = logging.getLogger(__name__)


@dataclass
class SampleRecord:
    id: str
    label: int
    bundle_path: Path
    mask_names: tuple[str, ...]

    def load(self) -> dict[str, np.ndarray]:
        return read_bundle(self.bundle_path)


def image_shape(entries: dict[str, np.ndarray]) -> tuple[int, int]:
    """Spatial (H, W) of a bundle's image entry, whatever its channel layout."""
    img = entries["image"]
    if img.ndim == 2:
        return img.shape
    if img.ndim == 3:
        return img.shape[1], img.shape[2]
    raise ManifestError(f"image entry must be 2-D or 3-D, got ndim={img.ndim}")


def grayscale_image(entries: dict[str, np.ndarray]) -> np.ndarray:
    """Image entry reduced to a single H x W channel (mean over channels)."""
    img = entries["image"]
    return img if img.ndim == 2 else img.mean(axis=0)


def load_manifest(path) -> list[SampleRecord]:
    """Parse and validate a manifest; every bundle reference is opened and
    its mask dimensions checked against the image."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("samples"), list):
        raise ManifestError(f"{path}: manifest must contain a 'samples' list")

    records: list[SampleRecord] = []
    seen: set[str] = set()
    for pos, raw in enumerate(doc["samples"]):
        where = f"{path}: sample #{pos}"
        if not isinstance(raw, dict):
            raise ManifestError(f"{where}: expected an object")
        for field_name in ("id", "label", "bundle"):
            if field_name not in raw:
                raise ManifestError(f"{where}: missing field {field_name!r}")
        sample_id = str(raw["id"])
        if sample_id in seen:
            raise ManifestError(f"{where}: duplicate id {sample_id!r}")
        seen.add(sample_id)
        if raw["label"] not in (0, 1):
            raise ManifestError(
                f"{where} ({sample_id}): label must be 0 or 1, got {raw['label']!r}"
            )
        bundle_path = path.parent / raw["bundle"]
        try:
            entries = read_bundle(bundle_path)
        except FileNotFoundError:
            raise ManifestError(
                f"{where} ({sample_id}): bundle {bundle_path} does not exist"
            ) from None
        except BundleError as exc:
            raise ManifestError(f"{where} ({sample_id}): {exc}") from exc
        if "image" not in entries:
            raise ManifestError(f"{where} ({sample_id}): bundle has no 'image' entry")
        img_shape = image_shape(entries)
        mask_names = tuple(str(m) for m in raw.get("masks", []))
        for mask in mask_names:
            key = f"mask.{mask}"
            if key not in entries:
                raise ManifestError(
                    f"{where} ({sample_id}): mask {mask!r} listed but entry "
                    f"{key!r} is missing from the bundle"
                )
            if entries[key].shape != img_shape:
                raise ManifestError(
                    f"{where} ({sample_id}): mask {mask!r} has shape "
                    f"{entries[key].shape} but the image is {img_shape}"
                )
        records.append(
            SampleRecord(
                id=sample_id,
                label=int(raw["label"]),
                bundle_path=bundle_path,
                mask_names=mask_names,
            )
        )
    if not records:
        log.warning("manifest %s contains no samples", path)
    else:
        n_case = sum(r.label for r in records)
        log.info(
            "loaded %d samples from %s (%d case / %d control)",
            len(records), path, n_case, len(records) - n_case,
        )
    return records
