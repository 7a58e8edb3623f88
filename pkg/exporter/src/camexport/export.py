"""Capture activations, logit gradients and scores; write bundles + manifest."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from .bundle import write_bundle
from .models import ConfigurationError, load_model, resolve_layer

log = logging.getLogger(__name__)


class DataError(Exception):
    """Bad input data (labels, images)."""


@dataclass
class ExportSpec:
    model: str
    layer: str
    class_policy: str = "predicted"  # "predicted" or "label"
    input_size: int = 224
    out_dir: Path = Path("export")
    scorecam: bool = False
    weights: Path | None = None

    def __post_init__(self):
        if self.class_policy not in ("predicted", "label"):
            raise ConfigurationError(f"unknown class policy {self.class_policy!r}")
        self.out_dir = Path(self.out_dir)


class Exporter:
    def __init__(self, spec: ExportSpec):
        self.spec = spec
        self.model = load_model(spec.model, spec.weights)
        self.layer = resolve_layer(self.model, spec.layer)
        self._acts = None
        self.layer.register_forward_hook(self._hook)

    def _hook(self, module, args, output):
        self._acts = output

    def prepare_image(self, source) -> torch.Tensor:
        """Decode/resize to (3, S, S) float in [0, 1]."""
        size = self.spec.input_size
        if isinstance(source, (str, Path)):
            with Image.open(source) as img:
                img = img.convert("RGB").resize((size, size), Image.BILINEAR)
                arr = np.asarray(img, dtype=np.float32) / 255.0
            tensor = torch.from_numpy(arr).permute(2, 0, 1)
        else:
            arr = np.asarray(source, dtype=np.float32)
            if arr.ndim == 2:
                arr = np.stack([arr] * 3)
            tensor = torch.from_numpy(arr)
            if tensor.shape[-2:] != (size, size):
                tensor = F.interpolate(
                    tensor[None], size=(size, size), mode="bilinear",
                    align_corners=True,
                )[0]
        return tensor

    def capture(self, image: torch.Tensor, label: int) -> dict[str, np.ndarray]:
        """One sample's bundle entries: image, acts, grads, score, target."""
        x = image[None].requires_grad_(True)
        logits = self.model(x)
        if logits.ndim != 2 or logits.shape[0] != 1:
            raise ConfigurationError(
                f"model output must be (1, n_classes), got {tuple(logits.shape)}"
            )
        acts = self._acts
        if acts is None or acts.ndim != 4:
            raise ConfigurationError(
                f"layer {self.spec.layer!r} did not produce a (1, K, h, w) "
                "activation map"
            )
        if self.spec.class_policy == "predicted":
            target = int(logits[0].argmax().item())
        else:
            target = int(label)
        (grads,) = torch.autograd.grad(logits[0, target], acts)
        probs = torch.softmax(logits[0].detach(), dim=0)

        entries = {
            "image": image.detach().mean(dim=0).numpy(),
            "acts": acts[0].detach().numpy(),
            "grads": grads[0].numpy(),
            # class-1 probability: the score the analysis core thresholds
            "score": np.array([float(probs[1])], dtype=np.float32),
            "target_class": np.array([float(target)], dtype=np.float32),
        }
        if self.spec.scorecam:
            entries["scorecam_scores"] = self._scorecam_scores(
                image, acts[0].detach(), target
            )
        for name, value in entries.items():
            if not np.isfinite(np.asarray(value)).all():
                raise DataError(f"non-finite values in {name!r}; sample aborted")
        return entries

    def _scorecam_scores(self, image, acts, target) -> np.ndarray:
        """Per-channel masked-input class probabilities, mirroring the
        analysis core's masking recipe (corner-aligned upsample + minmax)."""
        size = image.shape[-1]
        k = acts.shape[0]
        scores = np.empty(k, dtype=np.float32)
        with torch.no_grad():
            for i in range(k):
                ch = acts[i][None, None]
                up = F.interpolate(
                    ch, size=(size, size), mode="bilinear", align_corners=True
                )[0, 0]
                lo, hi = up.min(), up.max()
                mask = (up - lo) / (hi - lo) if hi > lo else torch.zeros_like(up)
                logits = self.model((image * mask)[None])
                scores[i] = float(torch.softmax(logits[0], dim=0)[target])
        return scores


def export_sample(spec: ExportSpec, image_source, label: int, sample_id: str,
                  exporter: Exporter | None = None) -> Path:
    """Export one sample; returns the bundle path."""
    exporter = exporter or Exporter(spec)
    bundles = spec.out_dir / "bundles"
    bundles.mkdir(parents=True, exist_ok=True)
    image = exporter.prepare_image(image_source)
    entries = exporter.capture(image, label)
    path = bundles / f"{sample_id}.camb"
    write_bundle(path, entries)
    return path


def read_labels(label_csv: Path) -> dict[str, int]:
    with open(label_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"label file {label_csv} is empty")
    labels = {}
    for row in rows:
        if "id" not in row or "label" not in row or row["label"] not in ("0", "1"):
            raise DataError(f"label file {label_csv}: bad row {row!r}")
        labels[row["id"]] = int(row["label"])
    return labels


def export_dataset(spec: ExportSpec, image_dir, label_csv) -> tuple[Path, int]:
    """Export a directory of images; returns (manifest path, skipped count).

    Image files are matched to label ids by filename stem.  Unmatched ids
    and undecodable images are reported and skipped; the manifest contains
    only successful samples.
    """
    image_dir = Path(image_dir)
    labels = read_labels(Path(label_csv))
    files = {p.stem: p for p in sorted(image_dir.iterdir()) if p.is_file()}
    missing = sorted(set(labels) - set(files))
    if missing:
        log.error("ids without image files (skipped): %s", ", ".join(missing))
    exporter = Exporter(spec)
    samples = []
    skipped = len(missing)
    for sample_id in sorted(set(labels) & set(files)):
        try:
            path = export_sample(
                spec, files[sample_id], labels[sample_id], sample_id, exporter
            )
        except (UnidentifiedImageError, OSError, DataError) as exc:
            log.error("sample %s skipped: %s", sample_id, exc)
            skipped += 1
            continue
        samples.append(
            {
                "id": sample_id,
                "label": labels[sample_id],
                "bundle": str(path.relative_to(spec.out_dir)),
                "masks": [],
            }
        )
    manifest = spec.out_dir / "manifest.json"
    doc = {
        "dataset": spec.model,
        "layer": spec.layer,
        "class_policy": spec.class_policy,
        "samples": samples,
    }
    manifest.write_text(json.dumps(doc, indent=1))
    return manifest, skipped
