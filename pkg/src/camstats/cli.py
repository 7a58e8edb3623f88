"""Command-line surface.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cams
from .errors import CamstatsError, ConfigurationError, DataError
from .experiment import (
    ExperimentConfig,
    _write_csv,
    recompute_from_ratios,
    run_experiment,
    _BundleScorer,
    _MiniScorer,
)
from .focus import activation_ratio, structure_ratio, top_fraction_region
from .manifest import grayscale_image, load_manifest
from .minicnn import TrainConfig, load_checkpoint, predict_proba_batch, save_checkpoint, train
from .overlay import render_overlay
from .rng import derive_seed
from .splits import make_splits
from .stats import auroc
from .synthetic import write_synthetic_dataset

log = logging.getLogger(__name__)


def _method_list(value: str) -> tuple[str, ...]:
    if value == "all":
        return cams.CAM_METHODS
    return (value,)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camstats",
        description="CAM saliency vs anatomy-mask overlap statistics",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("splits", help="print the 6 cross-validation scenarios")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("train", help="train the mini-CNN on one scenario")
    _add_common(p)
    p.add_argument("--scenario", type=int, default=1, choices=range(1, 7))
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)

    p = sub.add_parser("explain", help="saliency maps, ratios and overlays")
    _add_common(p)
    p.add_argument("--mode", choices=("mini", "bundle"), default="mini")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--method", default="all",
                   choices=cams.CAM_METHODS + ("all",))
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--target-class", choices=("predicted", "label"),
                   default="predicted")
    p.add_argument("--ids", default=None,
                   help="comma-separated sample ids (default: all)")

    p = sub.add_parser("stats", help="recompute tables from per-sample ratios")
    p.add_argument("--ratios", required=True, type=Path)
    p.add_argument("--classification", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="full experiment over all 6 scenarios")
    _add_common(p)
    p.add_argument("--mode", choices=("mini", "bundle"), default="mini")
    p.add_argument("--method", default="all",
                   choices=cams.CAM_METHODS + ("all",))
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--target-class", choices=("predicted", "label"),
                   default="predicted")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--threshold-criterion", choices=("youden", "accuracy"),
                   default="youden")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--external-manifest", type=Path, default=None)
    p.add_argument("--overlays", type=int, default=1,
                   help="overlay count per scenario and method")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--size", type=int, default=56)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--contrast", type=float, default=0.7)
    p.add_argument("--case-fraction", type=float, default=0.4)
    return parser


def _cmd_splits(args) -> int:
    records = load_manifest(args.manifest)
    scenarios = make_splits(records, derive_seed(args.seed, 101))
    doc = [
        {
            "index": s.index,
            "train": list(s.train),
            "val": list(s.val),
            "test": list(s.test),
        }
        for s in scenarios
    ]
    text = json.dumps(doc, indent=1)
    if args.out:
        args.out.write_text(text)
    else:
        print(text)
    return 0


def _cmd_train(args) -> int:
    records = load_manifest(args.manifest)
    by_id = {r.id: r for r in records}
    scenario = make_splits(records, derive_seed(args.seed, 101))[args.scenario - 1]
    data = {r.id: r.load() for r in records}

    def stack(ids):
        recs = [by_id[i] for i in ids]
        x = np.stack([data[r.id]["image"].astype(np.float64) for r in recs])
        y = np.asarray([r.label for r in recs])
        return x, y

    cfg = TrainConfig(
        seed=derive_seed(args.seed, 200, args.scenario),
        epochs=args.epochs,
        batch_size=args.batch_size,
    )
    model = train(stack(scenario.train), stack(scenario.val), cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt = args.out / f"model_s{args.scenario}.camb"
    save_checkpoint(model, ckpt)
    x_val, y_val = stack(scenario.val)
    val_auroc = auroc(predict_proba_batch(model, x_val), y_val)
    print(f"checkpoint: {ckpt}")
    print(f"scenario {args.scenario} validation AUROC: {val_auroc:.4f}")
    return 0


def _cmd_explain(args) -> int:
    records = load_manifest(args.manifest)
    if args.ids:
        wanted = set(args.ids.split(","))
        missing = wanted - {r.id for r in records}
        if missing:
            raise DataError(f"unknown sample ids: {sorted(missing)}")
        records = [r for r in records if r.id in wanted]
    methods = _method_list(args.method)
    if args.mode == "mini":
        if args.checkpoint is None:
            raise ConfigurationError("--mode mini needs --checkpoint")
        scorer = _MiniScorer(load_checkpoint(args.checkpoint), args.target_class)
    else:
        scorer = _BundleScorer(methods)
    args.out.mkdir(parents=True, exist_ok=True)
    overlay_dir = args.out / "overlays"
    overlay_dir.mkdir(exist_ok=True)
    rows = []
    for record in records:
        entries = record.load()
        saliencies = scorer.explain(record, entries, methods, args.fraction)
        for method in methods:
            saliency = saliencies[method]
            for anatomy in record.mask_names:
                mask = entries[f"mask.{anatomy}"].astype(np.uint8)
                region = top_fraction_region(saliency, args.fraction)
                act = activation_ratio(region, mask)
                struct = structure_ratio(mask)
                rows.append(
                    {
                        "evaluation": "adhoc",
                        "scenario": "0",
                        "sample_id": record.id,
                        "method": method,
                        "anatomy": anatomy,
                        "activation_ratio": act,
                        "structure_ratio": struct,
                        "difference": act - struct,
                    }
                )
            if record.mask_names:
                mask = entries[f"mask.{record.mask_names[0]}"]
                render_overlay(
                    grayscale_image(entries), saliency, mask,
                    overlay_dir / f"{record.id}_{method}.ppm", args.fraction,
                )
    _write_csv(
        args.out / "per_sample_ratios.csv",
        rows,
        [
            "evaluation", "scenario", "sample_id", "method", "anatomy",
            "activation_ratio", "structure_ratio", "difference",
        ],
    )
    print(f"wrote {len(rows)} ratio rows for {len(records)} samples")
    return 0


def _cmd_stats(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    report = recompute_from_ratios(args.ratios, args.classification, args.out)
    print(
        f"recomputed {len(report.explanation_rows)} explanation rows, "
        f"{len(report.correlation_rows)} correlation rows"
    )
    return 0


def _cmd_report(args) -> int:
    cfg = ExperimentConfig(
        manifest=args.manifest,
        out_dir=args.out,
        mode=args.mode,
        methods=_method_list(args.method),
        fraction=args.fraction,
        target_class=args.target_class,
        bootstrap=args.bootstrap,
        seed=args.seed,
        threshold_criterion=args.threshold_criterion,
        epochs=args.epochs,
        batch_size=args.batch_size,
        external_manifest=args.external_manifest,
        overlays_per_scenario=args.overlays,
    )
    report = run_experiment(cfg)
    pooled_auroc = report.classification_value("internal", "pooled", "auroc")
    print(f"report written to {args.out}")
    print(f"pooled internal test AUROC: {pooled_auroc:.4f}")
    return 0


def _cmd_synth(args) -> int:
    manifest = write_synthetic_dataset(
        args.out,
        n=args.n,
        size=args.size,
        seed=args.seed,
        contrast=args.contrast,
        case_fraction=args.case_fraction,
    )
    print(f"manifest: {manifest}")
    return 0


_COMMANDS = {
    "splits": _cmd_splits,
    "train": _cmd_train,
    "explain": _cmd_explain,
    "stats": _cmd_stats,
    "report": _cmd_report,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except CamstatsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
