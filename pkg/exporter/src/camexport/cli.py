"""camexport command line.

Exit codes: 0 success, 2 configuration error, 3 data error (including any
skipped samples during dataset export).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import DataError, ExportSpec, export_dataset, export_sample
from .models import ConfigurationError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camexport",
        description="Export model activations/gradients/scores as CAMB bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sample", "dataset"):
        p = sub.add_parser(name)
        p.add_argument("--model", required=True,
                       help="'toy' or 'torchvision:<name>'")
        p.add_argument("--layer", required=True,
                       help="named module to explain, e.g. 'relu2' or 'features.20'")
        p.add_argument("--policy", choices=("predicted", "label"),
                       default="predicted")
        p.add_argument("--size", type=int, default=224)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--scorecam", action="store_true",
                       help="precompute per-channel masked-input scores")
        p.add_argument("--weights", type=Path, default=None)
        if name == "sample":
            p.add_argument("--image", type=Path, required=True)
            p.add_argument("--label", type=int, required=True, choices=(0, 1))
            p.add_argument("--id", default=None)
        else:
            p.add_argument("--images", type=Path, required=True)
            p.add_argument("--labels", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    spec = ExportSpec(
        model=args.model,
        layer=args.layer,
        class_policy=args.policy,
        input_size=args.size,
        out_dir=args.out,
        scorecam=args.scorecam,
        weights=args.weights,
    )
    try:
        if args.command == "sample":
            sample_id = args.id or args.image.stem
            path = export_sample(spec, args.image, args.label, sample_id)
            print(f"bundle: {path}")
            return 0
        manifest, skipped = export_dataset(spec, args.images, args.labels)
        print(f"manifest: {manifest} ({skipped} skipped)")
        return 3 if skipped else 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
