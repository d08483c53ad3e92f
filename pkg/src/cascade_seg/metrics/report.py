"""Table-1 style evaluation of a prediction set and CSV emission."""

import csv
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import structlog

from ..models import Aggregation, ClassMetrics, HistogramBin, MetricsReport, ROCCurve
from .confusion import confusion, iou, merge, pixel_accuracy
from .rand import contingency_table, rand_index, rand_index_from_table
from .roc import DEFAULT_BAND, auc, best_threshold, restricted_roc

logger = structlog.get_logger()

NA = "NA"


def _class_metrics(
    preds: list[np.ndarray],
    truths: list[np.ndarray],
    aggregation: Aggregation,
) -> ClassMetrics:
    if aggregation == Aggregation.POOLED:
        counts = merge(confusion(p, t) for p, t in zip(preds, truths))
        table = sum(contingency_table(p, t, n_labels=2) for p, t in zip(preds, truths))
        return ClassMetrics(
            pixel_accuracy=pixel_accuracy(counts),
            iou=iou(counts),
            rand_index=rand_index_from_table(table),
        )
    per_image = [confusion(p, t) for p, t in zip(preds, truths)]
    return ClassMetrics(
        pixel_accuracy=float(np.mean([pixel_accuracy(c) for c in per_image])),
        iou=float(np.mean([iou(c) for c in per_image])),
        rand_index=float(np.mean([rand_index(p, t) for p, t in zip(preds, truths)])),
    )


def evaluate_model(
    predictions: Sequence[np.ndarray],
    truths: Sequence[np.ndarray],
    tumor_probs: Optional[Sequence[np.ndarray]] = None,
    band: tuple[float, float] = DEFAULT_BAND,
    aggregation: Aggregation = Aggregation.POOLED,
) -> MetricsReport:
    """Liver (labels >= 1) and tumor (label 2) metrics over aligned label maps.

    Args:
        predictions: predicted label maps
        truths: ground-truth label maps, same order and shapes
        tumor_probs: optional tumor probability maps for the restricted AUC
        band: probability band for the restricted ROC
        aggregation: global pixel pooling or per-image averaging

    Returns:
        MetricsReport; rAUC and threshold are None when undefined
    """
    predictions = [np.asarray(p) for p in predictions]
    truths = [np.asarray(t) for t in truths]
    if len(predictions) != len(truths) or not predictions:
        raise ValueError(
            f"misaligned sets: {len(predictions)} predictions vs {len(truths)} ground truths"
        )
    for i, (p, t) in enumerate(zip(predictions, truths)):
        if p.shape != t.shape:
            raise ValueError(f"misaligned sets: item {i} has prediction {p.shape} vs truth {t.shape}")

    liver = _class_metrics(
        [(p >= 1).astype(np.uint8) for p in predictions],
        [(t >= 1).astype(np.uint8) for t in truths],
        aggregation,
    )
    tumor_truth = [(t == 2).astype(np.uint8) for t in truths]
    tumor = _class_metrics(
        [(p == 2).astype(np.uint8) for p in predictions],
        tumor_truth,
        aggregation,
    )

    if tumor_probs is not None:
        if len(tumor_probs) != len(truths):
            raise ValueError(f"misaligned sets: {len(tumor_probs)} probability maps vs {len(truths)} truths")
        curve = restricted_roc(list(tumor_probs), tumor_truth, band)
        tumor.restricted_auc = auc(curve)
        tumor.chosen_threshold = best_threshold(curve)

    report = MetricsReport(liver=liver, tumor=tumor, aggregation=aggregation, n_images=len(truths))
    logger.info(
        "model_evaluated",
        n_images=report.n_images,
        liver_iou=round(liver.iou, 4),
        tumor_iou=round(tumor.iou, 4),
        tumor_rauc=tumor.restricted_auc,
    )
    return report


# ============================================================
# CSV emission
# ============================================================

def _fmt(value: Optional[float]) -> str:
    return NA if value is None else repr(float(value))


def write_report_csv(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "pixel_acc", "iou", "rand_index", "rauc", "threshold"])
        for name, row in (("liver", report.liver), ("tumor", report.tumor)):
            writer.writerow([
                name,
                _fmt(row.pixel_accuracy),
                _fmt(row.iou),
                _fmt(row.rand_index),
                _fmt(row.restricted_auc),
                _fmt(row.chosen_threshold),
            ])


def write_roc_csv(curve: ROCCurve, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "fpr", "tpr"])
        for p in curve.points:
            writer.writerow([repr(p.threshold), repr(p.fpr), repr(p.tpr)])


def write_histogram_csv(bins: list[HistogramBin], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_low", "bin_high", "count"])
        for b in bins:
            writer.writerow([repr(b.bin_low), repr(b.bin_high), b.count])
