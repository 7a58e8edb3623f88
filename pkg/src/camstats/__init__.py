"""camstats: saliency-vs-anatomy overlap statistics for CAM explanations."""

from .cams import (
    CAM_METHODS,
    eigen_cam,
    grad_cam,
    layer_cam,
    score_cam,
    xgrad_cam,
)
from .experiment import ExperimentConfig, ExperimentReport, run_experiment
from .focus import activation_ratio, structure_ratio, top_fraction_region
from .manifest import SampleRecord, load_manifest
from .minicnn import MiniCnnModel, TrainConfig, train
from .splits import SplitScenario, make_splits
from .stats import (
    auprc,
    auroc,
    bootstrap_se,
    confusion_metrics,
    paired_t_test,
    pearson,
    select_threshold,
    spearman,
    t_sf,
)
from .tensorops import bilinear_resize, minmax_normalize, relu

__version__ = "0.1.0"
