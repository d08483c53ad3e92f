"""Evaluation metrics: confusion, IoU, Rand index, restricted ROC/AUC."""

from .confusion import confusion, iou, merge, pixel_accuracy
from .rand import contingency_table, rand_index, rand_index_from_table
from .roc import auc, best_threshold, probability_histogram, restricted_roc
from .report import evaluate_model, write_histogram_csv, write_report_csv, write_roc_csv

__all__ = [
    "confusion",
    "iou",
    "merge",
    "pixel_accuracy",
    "contingency_table",
    "rand_index",
    "rand_index_from_table",
    "auc",
    "best_threshold",
    "probability_histogram",
    "restricted_roc",
    "evaluate_model",
    "write_histogram_csv",
    "write_report_csv",
    "write_roc_csv",
]
