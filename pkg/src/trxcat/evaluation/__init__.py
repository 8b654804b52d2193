"""Confusion matrices, support-weighted metrics, reports and the train-fraction experiment runner."""
from .metrics import ClassMetrics, ConfusionMatrix, WeightedMetrics, confusion, weighted_f1, weighted_metrics
from .report import EvaluationReport, ExperimentTable, build_report, per_category_table, report_from_confusion

__all__ = [
    "ClassMetrics", "ConfusionMatrix", "WeightedMetrics", "confusion", "weighted_f1", "weighted_metrics",
    "EvaluationReport", "ExperimentTable", "build_report", "per_category_table", "report_from_confusion",
]
