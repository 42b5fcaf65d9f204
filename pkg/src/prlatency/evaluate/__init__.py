"""Time-series cross-validation, rank metrics, Scott-Knott ranking and drivers."""

from .cv import CVPlan, check_no_leakage, time_series_split
from .experiments import EvaluationReport, FoldOutcome, KindResult, run_cross_project, run_within_project
from .metrics import MetricResult, auc_pr, auc_roc, ovr_macro
from .scott_knott import SKGroups, cohens_d, scott_knott_esd

__all__ = [
    "CVPlan",
    "EvaluationReport",
    "FoldOutcome",
    "KindResult",
    "MetricResult",
    "SKGroups",
    "auc_pr",
    "auc_roc",
    "check_no_leakage",
    "cohens_d",
    "ovr_macro",
    "run_cross_project",
    "run_within_project",
    "scott_knott_esd",
    "time_series_split",
]
