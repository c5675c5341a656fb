"""Behavioural change-point detection from daily mobile-sensing features."""

from .changepoint import (OnlineChangeDetector, RunLengthState, RunLengthTrace,
                          dirmult_log_predictive, run_detector)
from .detector import DetectorConfig, ShiftDetector, detect
from .evaluation import auroc, evaluate, roc_curve
from .features import DailyFeatures, PatientSeries
from .mixture import ProfileMixture, select_k

__all__ = [
    "DailyFeatures",
    "DetectorConfig",
    "OnlineChangeDetector",
    "PatientSeries",
    "ProfileMixture",
    "RunLengthState",
    "RunLengthTrace",
    "ShiftDetector",
    "auroc",
    "detect",
    "dirmult_log_predictive",
    "evaluate",
    "roc_curve",
    "run_detector",
    "select_k",
]

__version__ = "0.1.0"
