"""Speech deepfake detection: metrics, calibration and fusion, pooling back-ends, augmentation."""

from . import augmentation, calibration, metrics, pooling, report, score_io
from .calibration import FitConfig, FusionModel, greedy_select
from .metrics import DcfParams, evaluate
from .score_io import DataError, LabeledScoreSet, load_set

__version__ = "0.1.0"

__all__ = [
    "DataError", "DcfParams", "FitConfig", "FusionModel", "LabeledScoreSet", "augmentation",
    "calibration", "evaluate", "greedy_select", "load_set", "metrics", "pooling", "report",
    "score_io",
]
