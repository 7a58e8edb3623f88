"""End-to-end experiment harness: splits, training (or bundle loading),
CAM explanation, overlap ratios, statistics, and report files.

Outputs in the configured directory:
    classification.csv    per-scenario metrics (value, SE) plus pooled means
    explanation.csv       per (method, anatomy) ratio statistics and t-tests
    correlation.csv       AUROC-vs-activation-ratio correlations per anatomy
    per_sample_ratios.csv every per-sample ratio pair (audit trail: every
                          table statistic is re-derivable from this file)
    overlays/*.ppm        sample overlays

Correlation points are per-(scenario, method) aggregates: x = the
scenario's test AUROC, y = the scenario's mean activation ratio for the
method and anatomy.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import cams
from .errors import ConfigurationError, DataError, DegenerateVarianceError
from .focus import activation_ratio, structure_ratio, top_fraction_region
from .manifest import SampleRecord, grayscale_image, load_manifest
from .minicnn import (
    MiniCnnModel,
    MiniCnnOracle,
    TrainConfig,
    backward_to_activations,
    forward,
    predict_proba_batch,
    train,
)
from .overlay import render_overlay
from .rng import derive_seed
from .splits import external_split, make_splits
from .stats import (
    TestResult,
    evaluate_classifier,
    mean_se,
    paired_t_test,
    pearson,
    select_threshold,
    spearman,
)

log = logging.getLogger(__name__)

POOLED = "pooled"
METRIC_NAMES = ("auroc", "auprc", "accuracy", "sensitivity", "specificity", "ppv", "npv")


@dataclass
class ExperimentConfig:
    manifest: Path
    out_dir: Path
    mode: str = "mini"  # "mini" or "bundle"
    methods: tuple[str, ...] = cams.CAM_METHODS
    fraction: float = 0.05
    target_class: str = "predicted"  # "predicted" or "label"
    bootstrap: int = 1000
    seed: int = 0
    threshold_criterion: str = "youden"
    epochs: int = 100
    batch_size: int = 16
    external_manifest: Optional[Path] = None
    overlays_per_scenario: int = 1

    def __post_init__(self):
        if self.mode not in ("mini", "bundle"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.target_class not in ("predicted", "label"):
            raise ConfigurationError(f"unknown target class {self.target_class!r}")
        for m in self.methods:
            if m not in cams.CAM_METHODS:
                raise ConfigurationError(f"unknown CAM method {m!r}")


@dataclass
class ExperimentReport:
    classification_rows: list[dict] = field(default_factory=list)
    explanation_rows: list[dict] = field(default_factory=list)
    correlation_rows: list[dict] = field(default_factory=list)
    per_sample_rows: list[dict] = field(default_factory=list)

    def classification_value(self, evaluation: str, scenario, metric: str):
        for row in self.classification_rows:
            if (
                row["evaluation"] == evaluation
                and row["scenario"] == str(scenario)
                and row["metric"] == metric
            ):
                return row["value"]
        raise KeyError((evaluation, scenario, metric))


class _MiniScorer:
    """Per-scenario scorer in mini mode: a freshly trained model."""

    def __init__(self, model: MiniCnnModel, target_class: str):
        self.model = model
        self.target_class = target_class

    def scores(self, records, data) -> np.ndarray:
        images = np.stack([data[r.id]["image"].astype(np.float64) for r in records])
        return predict_proba_batch(self.model, images)

    def explain(self, record, entries, methods, fraction):
        image = entries["image"].astype(np.float64)
        logits, acts = forward(self.model, image)
        target = int(np.argmax(logits)) if self.target_class == "predicted" else record.label
        grads = backward_to_activations(self.model, image, target)
        out = {}
        for method in methods:
            if method == "grad-cam":
                out[method] = cams.grad_cam(acts, grads, image.shape)
            elif method == "xgrad-cam":
                out[method] = cams.xgrad_cam(acts, grads, image.shape)
            elif method == "layer-cam":
                out[method] = cams.layer_cam(acts, grads, image.shape)
            elif method == "eigen-cam":
                out[method] = cams.eigen_cam(acts, image.shape)
            elif method == "score-cam":
                out[method] = cams.score_cam(
                    acts, image, target, MiniCnnOracle(self.model)
                )
        return out


class _BundleScorer:
    """Bundle mode: scores and CAM inputs come from exported tensors."""

    def __init__(self, methods=None):
        self.methods = methods

    def scores(self, records, data) -> np.ndarray:
        vals = []
        for r in records:
            entries = data[r.id]
            if "score" not in entries:
                raise ConfigurationError(
                    f"sample {r.id}: bundle mode needs a 'score' entry"
                )
            vals.append(float(entries["score"].ravel()[0]))
        return np.asarray(vals)

    def explain(self, record, entries, methods, fraction):
        for key in ("acts", "grads"):
            if key not in entries:
                raise ConfigurationError(
                    f"sample {record.id}: bundle mode needs an {key!r} entry"
                )
        acts = entries["acts"].astype(np.float64)
        grads = entries["grads"].astype(np.float64)
        shape = grayscale_image(entries).shape
        out = {}
        for method in methods:
            if method == "grad-cam":
                out[method] = cams.grad_cam(acts, grads, shape)
            elif method == "xgrad-cam":
                out[method] = cams.xgrad_cam(acts, grads, shape)
            elif method == "layer-cam":
                out[method] = cams.layer_cam(acts, grads, shape)
            elif method == "eigen-cam":
                out[method] = cams.eigen_cam(acts, shape)
            elif method == "score-cam":
                if "scorecam_scores" not in entries:
                    raise ConfigurationError(
                        f"sample {record.id}: score-cam requested in bundle mode "
                        "but the bundle has no 'scorecam_scores' entry and no "
                        "model is available"
                    )
                fmap = cams.score_cam_map_from_scores(
                    acts, entries["scorecam_scores"]
                )
                out[method] = cams.finalize_map(fmap, shape)
        return out


def _load_all(records) -> dict[str, dict]:
    return {r.id: r.load() for r in records}


def _labels(records) -> np.ndarray:
    return np.asarray([r.label for r in records], dtype=np.int64)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    records = load_manifest(cfg.manifest)
    if not records:
        raise DataError(f"manifest {cfg.manifest} contains no samples")
    by_id = {r.id: r for r in records}
    data = _load_all(records)
    scenarios = make_splits(records, derive_seed(cfg.seed, 101))

    report = ExperimentReport()
    out_dir = Path(cfg.out_dir)
    overlay_dir = out_dir / "overlays"
    overlay_dir.mkdir(parents=True, exist_ok=True)

    ext_records = ext_data = ext_val = ext_test = None
    if cfg.external_manifest is not None:
        ext_records = load_manifest(cfg.external_manifest)
        ext_by_id = {r.id: r for r in ext_records}
        ext_data = _load_all(ext_records)
        val_ids, test_ids = external_split(ext_records, derive_seed(cfg.seed, 401))
        ext_val = [ext_by_id[i] for i in val_ids]
        ext_test = [ext_by_id[i] for i in test_ids]

    scenario_auroc: dict[tuple[str, int], float] = {}
    # ratios[(evaluation, method, anatomy)] -> per-scenario lists of pairs
    ratios: dict[tuple[str, str, str], dict[int, list[tuple[float, float]]]] = {}

    for scenario in scenarios:
        scorer = _fit_scorer(cfg, scenario, by_id, data)
        _evaluate_scenario(
            cfg, report, scorer, scenario.index, "internal",
            [by_id[i] for i in scenario.val], [by_id[i] for i in scenario.test],
            data, scenario_auroc, ratios, overlay_dir,
        )
        if ext_records is not None:
            _evaluate_scenario(
                cfg, report, scorer, scenario.index, "external",
                ext_val, ext_test, ext_data, scenario_auroc, ratios, overlay_dir,
            )

    evaluations = ["internal"] + (["external"] if ext_records is not None else [])
    _pool_classification(report, evaluations)
    _summarize_explanations(report, ratios)
    _summarize_correlations(report, scenario_auroc, ratios, len(scenarios))
    _write_reports(report, out_dir)
    return report


def _fit_scorer(cfg, scenario, by_id, data):
    if cfg.mode == "bundle":
        return _BundleScorer(cfg.methods)
    train_recs = [by_id[i] for i in scenario.train]
    val_recs = [by_id[i] for i in scenario.val]
    x_train = np.stack(
        [data[r.id]["image"].astype(np.float64) for r in train_recs]
    )
    x_val = np.stack([data[r.id]["image"].astype(np.float64) for r in val_recs])
    tcfg = TrainConfig(
        seed=derive_seed(cfg.seed, 200, scenario.index),
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
    )
    log.info("scenario %d: training mini-CNN on %d samples", scenario.index, len(train_recs))
    model = train((x_train, _labels(train_recs)), (x_val, _labels(val_recs)), tcfg)
    return _MiniScorer(model, cfg.target_class)


def _evaluate_scenario(
    cfg, report, scorer, scenario_index, evaluation,
    val_recs, test_recs, data, scenario_auroc, ratios, overlay_dir,
):
    val_scores = scorer.scores(val_recs, data)
    test_scores = scorer.scores(test_recs, data)
    tau = select_threshold(
        val_scores, _labels(val_recs), cfg.threshold_criterion
    ).tau
    metrics = evaluate_classifier(
        test_scores,
        _labels(test_recs),
        tau,
        cfg.bootstrap,
        derive_seed(cfg.seed, 300, scenario_index, 0 if evaluation == "internal" else 1),
    )
    for name, mv in metrics.as_dict().items():
        report.classification_rows.append(
            {
                "evaluation": evaluation,
                "scenario": str(scenario_index),
                "metric": name,
                "value": mv.value,
                "se": mv.se,
            }
        )
    scenario_auroc[(evaluation, scenario_index)] = metrics.auroc.value

    for pos, record in enumerate(test_recs):
        entries = data[record.id]
        saliencies = scorer.explain(record, entries, cfg.methods, cfg.fraction)
        for method in cfg.methods:
            saliency = saliencies[method]
            for anatomy in record.mask_names:
                mask = entries[f"mask.{anatomy}"].astype(np.uint8)
                region = top_fraction_region(saliency, cfg.fraction)
                act = activation_ratio(region, mask)
                struct = structure_ratio(mask)
                report.per_sample_rows.append(
                    {
                        "evaluation": evaluation,
                        "scenario": str(scenario_index),
                        "sample_id": record.id,
                        "method": method,
                        "anatomy": anatomy,
                        "activation_ratio": act,
                        "structure_ratio": struct,
                        "difference": act - struct,
                    }
                )
                ratios.setdefault((evaluation, method, anatomy), {}).setdefault(
                    scenario_index, []
                ).append((act, struct))
            if pos < cfg.overlays_per_scenario and record.mask_names:
                mask = entries[f"mask.{record.mask_names[0]}"]
                name = f"{evaluation}_s{scenario_index}_{record.id}_{method}.ppm"
                render_overlay(
                    grayscale_image(entries), saliency, mask,
                    overlay_dir / name, cfg.fraction,
                )


def _pool_classification(report, evaluations):
    for evaluation in evaluations:
        for metric in METRIC_NAMES:
            values = [
                row["value"]
                for row in report.classification_rows
                if row["evaluation"] == evaluation
                and row["metric"] == metric
                and row["scenario"] != POOLED
                and row["value"] is not None
            ]
            if not values:
                mean = se = None
            else:
                mean, se = mean_se(values)
            report.classification_rows.append(
                {
                    "evaluation": evaluation,
                    "scenario": POOLED,
                    "metric": metric,
                    "value": mean,
                    "se": se,
                }
            )


def _summarize_explanations(report, ratios):
    for (evaluation, method, anatomy), per_scenario in sorted(ratios.items()):
        acts, structs = [], []
        for pairs in per_scenario.values():
            for a, s in pairs:
                acts.append(a)
                structs.append(s)
        act_mean, act_se = mean_se(acts)
        struct_mean, struct_se = mean_se(structs)
        diffs = [a - s for a, s in zip(acts, structs)]
        diff_mean, diff_se = mean_se(diffs)
        try:
            test: Optional[TestResult] = paired_t_test(acts, structs)
        except DegenerateVarianceError:
            test = None
        report.explanation_rows.append(
            {
                "evaluation": evaluation,
                "method": method,
                "anatomy": anatomy,
                "n": len(acts),
                "activation_ratio_mean": act_mean,
                "activation_ratio_se": act_se,
                "structure_ratio_mean": struct_mean,
                "structure_ratio_se": struct_se,
                "difference_mean": diff_mean,
                "difference_se": diff_se,
                "t_statistic": test.statistic if test else None,
                "df": test.df if test else None,
                "p_value": test.p_value if test else None,
            }
        )


def _summarize_correlations(report, scenario_auroc, ratios, n_scenarios):
    evaluations = sorted({key[0] for key in ratios})
    anatomies = sorted({key[2] for key in ratios})
    for evaluation in evaluations:
        for anatomy in anatomies:
            xs, ys = [], []
            for (ev, method, anat), per_scenario in sorted(ratios.items()):
                if ev != evaluation or anat != anatomy:
                    continue
                for scenario_index, pairs in sorted(per_scenario.items()):
                    xs.append(scenario_auroc[(evaluation, scenario_index)])
                    ys.append(float(np.mean([a for a, _ in pairs])))
            if len(xs) < 3:
                continue
            try:
                pear: Optional[TestResult] = pearson(xs, ys)
            except DegenerateVarianceError:
                pear = None
            try:
                spear: Optional[TestResult] = spearman(xs, ys)
            except DegenerateVarianceError:
                spear = None
            report.correlation_rows.append(
                {
                    "evaluation": evaluation,
                    "anatomy": anatomy,
                    "n_points": len(xs),
                    "pearson_r": pear.statistic if pear else None,
                    "pearson_p": pear.p_value if pear else None,
                    "spearman_rho": spear.statistic if spear else None,
                    "spearman_p": spear.p_value if spear else None,
                }
            )


def recompute_from_ratios(
    ratios_csv, classification_csv=None, out_dir=None
) -> ExperimentReport:
    """Rebuild explanation (and, given classification.csv, correlation)
    tables from the persisted per-sample ratios.  Every reported statistic
    is re-derivable this way."""
    report = ExperimentReport()
    ratios: dict[tuple[str, str, str], dict[int, list[tuple[float, float]]]] = {}
    with open(ratios_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            report.per_sample_rows.append(
                {
                    "evaluation": row["evaluation"],
                    "scenario": row["scenario"],
                    "sample_id": row["sample_id"],
                    "method": row["method"],
                    "anatomy": row["anatomy"],
                    "activation_ratio": float(row["activation_ratio"]),
                    "structure_ratio": float(row["structure_ratio"]),
                    "difference": float(row["difference"]),
                }
            )
            key = (row["evaluation"], row["method"], row["anatomy"])
            ratios.setdefault(key, {}).setdefault(int(row["scenario"]), []).append(
                (float(row["activation_ratio"]), float(row["structure_ratio"]))
            )
    _summarize_explanations(report, ratios)
    if classification_csv is not None:
        scenario_auroc: dict[tuple[str, int], float] = {}
        with open(classification_csv, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["metric"] == "auroc" and row["scenario"] != POOLED:
                    scenario_auroc[(row["evaluation"], int(row["scenario"]))] = float(
                        row["value"]
                    )
        _summarize_correlations(report, scenario_auroc, ratios, 0)
    if out_dir is not None:
        _write_reports(report, Path(out_dir))
    return report


def _format(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(c)) for c in columns])


def _write_reports(report: ExperimentReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out_dir / "classification.csv",
        report.classification_rows,
        ["evaluation", "scenario", "metric", "value", "se"],
    )
    _write_csv(
        out_dir / "explanation.csv",
        report.explanation_rows,
        [
            "evaluation", "method", "anatomy", "n",
            "activation_ratio_mean", "activation_ratio_se",
            "structure_ratio_mean", "structure_ratio_se",
            "difference_mean", "difference_se",
            "t_statistic", "df", "p_value",
        ],
    )
    _write_csv(
        out_dir / "correlation.csv",
        report.correlation_rows,
        [
            "evaluation", "anatomy", "n_points",
            "pearson_r", "pearson_p", "spearman_rho", "spearman_p",
        ],
    )
    _write_csv(
        out_dir / "per_sample_ratios.csv",
        report.per_sample_rows,
        [
            "evaluation", "scenario", "sample_id", "method", "anatomy",
            "activation_ratio", "structure_ratio", "difference",
        ],
    )
