"""Tests for confusion counts, IoU, Rand index and restricted ROC analysis.

Closed forms are cross-checked against brute-force oracles (pair enumeration
for the Rand index, pairwise ranking for the AUC).
"""

import csv
import itertools

import numpy as np
import pytest

from conftest import random_labels, random_mask

from cascade_seg.autodiff import ShapeError
from cascade_seg.metrics import (
    auc,
    best_threshold,
    confusion,
    contingency_table,
    evaluate_model,
    iou,
    merge,
    pixel_accuracy,
    probability_histogram,
    rand_index,
    rand_index_from_table,
    restricted_roc,
    write_report_csv,
    write_roc_csv,
)
from cascade_seg.models import Aggregation, ConfusionCounts, ROCCurve, ROCPoint
from cascade_seg.pipeline import threshold


def random_shape(rng):
    return int(rng.integers(1, 13)), int(rng.integers(2, 13))


# =============================================================================
# Confusion, accuracy, IoU
# =============================================================================

class TestConfusion:
    def test_counts(self):
        pred = np.array([1, 1, 0, 0])
        truth = np.array([1, 0, 1, 0])
        assert confusion(pred, truth) == ConfusionCounts(tp=1, fp=1, fn=1, tn=1)

    def test_iou_and_accuracy_match_definitions(self, rng):
        for _ in range(200):
            shape = random_shape(rng)
            pred, truth = random_mask(rng, shape, rng.random()), random_mask(rng, shape, rng.random())
            counts = confusion(pred, truth)
            inter = np.count_nonzero(pred & truth)
            union = np.count_nonzero(pred | truth)
            assert iou(counts) == (1.0 if union == 0 else inter / union)
            assert pixel_accuracy(counts) == np.count_nonzero(pred == truth) / pred.size

    def test_empty_masks_have_unit_iou(self):
        zeros = np.zeros((3, 3), dtype=np.uint8)
        assert iou(confusion(zeros, zeros)) == 1.0

    def test_merge_is_associative(self, rng):
        parts = [confusion(random_mask(rng, (4, 4)), random_mask(rng, (4, 4))) for _ in range(3)]
        a, b, c = parts
        assert merge([merge([a, b]), c]) == merge([a, merge([b, c])]) == merge(parts)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            confusion(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_empty_table_accuracy_undefined(self):
        with pytest.raises(ValueError):
            pixel_accuracy(ConfusionCounts())


# =============================================================================
# Rand index
# =============================================================================

def rand_index_by_pairs(s1: np.ndarray, s2: np.ndarray) -> float:
    a, b = s1.ravel(), s2.ravel()
    pairs = list(itertools.combinations(range(a.size), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


class TestRandIndex:
    def test_identical_segmentations(self, rng):
        labels = random_labels(rng, (5, 5))
        assert rand_index(labels, labels) == 1.0

    def test_label_permutation_invariant(self, rng):
        labels = random_labels(rng, (5, 5))
        permuted = np.array([2, 0, 1], dtype=np.uint8)[labels]
        assert rand_index(labels, permuted) == 1.0

    def test_matches_pair_enumeration(self, rng):
        for _ in range(200):
            shape = (int(rng.integers(1, 7)), int(rng.integers(2, 7)))
            s1, s2 = random_labels(rng, shape), random_labels(rng, shape)
            assert rand_index(s1, s2) == rand_index_by_pairs(s1, s2)

    @pytest.mark.slow
    def test_matches_pair_enumeration_up_to_12x12(self, rng):
        for _ in range(200):
            shape = random_shape(rng)
            s1, s2 = random_mask(rng, shape), random_mask(rng, shape)
            assert rand_index(s1, s2) == rand_index_by_pairs(s1, s2)

    def test_single_pixel_rejected(self):
        with pytest.raises(ValueError):
            rand_index(np.array([1]), np.array([1]))

    def test_tables_add_for_pooling(self, rng):
        s1, s2 = random_mask(rng, (4, 6)), random_mask(rng, (4, 6))
        pooled = contingency_table(s1[:2], s2[:2], 2) + contingency_table(s1[2:], s2[2:], 2)
        assert rand_index_from_table(pooled) == rand_index(s1, s2)


# =============================================================================
# Restricted ROC
# =============================================================================

def auc_by_ranking(scores: np.ndarray, labels: np.ndarray) -> float:
    """P(pos > neg) + P(pos == neg) / 2 over all positive/negative pairs."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (greater + 0.5 * ties) / (pos.size * neg.size)


class TestRestrictedROC:
    def test_curve_spans_unit_square(self, rng):
        scores = rng.uniform(0.02, 0.98, size=(6, 6))
        truth = random_mask(rng, (6, 6))
        curve = restricted_roc(scores, truth)
        assert (curve.points[0].fpr, curve.points[0].tpr) == (0.0, 0.0)
        assert (curve.points[-1].fpr, curve.points[-1].tpr) == (1.0, 1.0)

    def test_auc_matches_ranking_oracle(self, rng):
        for _ in range(200):
            shape = random_shape(rng)
            # coarse grid forces ties
            scores = np.round(rng.uniform(0.0, 1.0, size=shape), 1)
            truth = random_mask(rng, shape)
            inside = (scores > 0.01) & (scores < 0.99)
            curve = restricted_roc(scores, truth)
            labels = truth[inside]
            if labels.size == 0 or labels.min() == labels.max():
                assert curve.is_empty and auc(curve) is None
                continue
            assert auc(curve) == pytest.approx(auc_by_ranking(scores[inside], labels), abs=1e-12)

    def test_auc_invariant_under_monotone_transform(self, rng):
        for _ in range(50):
            scores = rng.uniform(0.05, 0.95, size=(8, 8))
            truth = random_mask(rng, (8, 8))
            plain = auc(restricted_roc(scores, truth, (0.01, 0.99)))
            squared = auc(restricted_roc(scores ** 2, truth, (0.01 ** 2, 0.99 ** 2)))
            assert squared == pytest.approx(plain, abs=1e-12)

    def test_perfect_separation(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        truth = np.array([0, 0, 1, 1])
        assert auc(restricted_roc(scores, truth)) == 1.0
        assert best_threshold(restricted_roc(scores, truth)) == 0.2

    def test_chosen_threshold_reproduces_operating_point(self):
        probs = np.array([[0.2, 0.3], [0.7, 0.8]])
        truth = np.array([[0, 0], [1, 1]])
        curve = restricted_roc(probs, truth)
        chosen = best_threshold(curve)
        point = next(p for p in curve.points if p.threshold == chosen)
        np.testing.assert_array_equal(threshold(probs, chosen), truth)
        assert (point.fpr, point.tpr) == (0.0, 1.0)

    def test_operating_points_match_strict_thresholding(self, rng):
        for _ in range(50):
            scores = np.round(rng.uniform(0.1, 0.9, size=(5, 5)), 1)
            truth = random_mask(rng, (5, 5))
            if truth.min() == truth.max():
                continue
            for point in restricted_roc(scores, truth).points:
                called = threshold(scores, point.threshold)
                assert point.tpr == np.count_nonzero(called & truth) / np.count_nonzero(truth)
                assert point.fpr == np.count_nonzero(called & (1 - truth)) / np.count_nonzero(truth == 0)

    def test_ten_pixels_match_sweep_loop(self, rng):
        for _ in range(100):
            scores = np.round(rng.uniform(0.0, 1.0, size=10), 1)
            truth = random_mask(rng, (10,))
            curve = restricted_roc(scores, truth)
            kept = [(s, y) for s, y in zip(scores, truth) if 0.01 < s < 0.99]
            n_pos = sum(1 for _, y in kept if y == 1)
            n_neg = len(kept) - n_pos
            if n_pos == 0 or n_neg == 0:
                assert curve.is_empty
                continue
            distinct = sorted({s for s, _ in kept}, reverse=True)
            expected = []
            for t in [0.99] + distinct[1:] + [0.01]:
                tp = fp = 0
                for s, y in kept:
                    if s > t:
                        if y == 1:
                            tp += 1
                        else:
                            fp += 1
                expected.append((t, fp / n_neg, tp / n_pos))
            assert [(p.threshold, p.fpr, p.tpr) for p in curve.points] == expected

    def test_youden_ties_go_to_larger_threshold(self):
        scores = np.array([0.2, 0.4, 0.6, 0.8])
        truth = np.array([0, 1, 0, 1])
        curve = restricted_roc(scores, truth)
        j = {p.threshold: p.tpr - p.fpr for p in curve.points}
        assert j[0.6] == j[0.2] == 0.5
        assert best_threshold(curve) == 0.6

    def test_out_of_band_pixels_ignored(self):
        scores = np.array([0.0, 1.0, 0.3, 0.6])
        truth = np.array([1, 0, 0, 1])
        assert auc(restricted_roc(scores, truth)) == 1.0

    def test_single_class_gives_empty_curve(self):
        curve = restricted_roc(np.array([0.3, 0.5]), np.array([0, 0]))
        assert curve.is_empty
        assert auc(curve) is None
        assert best_threshold(curve) is None

    def test_curve_validator_rejects_unsorted_thresholds(self):
        with pytest.raises(ValueError):
            ROCCurve(points=[ROCPoint(threshold=0.2, fpr=0, tpr=0), ROCPoint(threshold=0.5, fpr=1, tpr=1)])

    def test_histogram_counts_in_band_pixels(self, rng):
        scores = rng.uniform(0.0, 1.0, size=(10, 10))
        bins = probability_histogram(scores, bins=49)
        assert len(bins) == 49
        assert sum(b.count for b in bins) == np.count_nonzero((scores > 0.01) & (scores < 0.99))
        assert bins[0].bin_low == pytest.approx(0.01) and bins[-1].bin_high == pytest.approx(0.99)

    def test_histogram_matches_hand_binning(self):
        values = np.array([
            0.0, 0.005, 0.995,
            0.05, 0.1, 0.15, 0.2, 0.25,
            0.3, 0.35, 0.4,
            0.55, 0.6, 0.65, 0.7,
            0.8, 0.85, 0.9, 0.95, 0.98,
        ])
        bins = probability_histogram(values, bins=4)
        # edges 0.01, 0.255, 0.5, 0.745, 0.99
        assert [b.count for b in bins] == [5, 3, 4, 5]
        assert [b.bin_low for b in bins] == pytest.approx([0.01, 0.255, 0.5, 0.745])

    def test_histogram_without_in_band_pixels(self):
        bins = probability_histogram(np.array([0.0, 0.005, 1.0]), bins=4)
        assert [b.count for b in bins] == [0, 0, 0, 0]


# =============================================================================
# Model evaluation
# =============================================================================

class TestEvaluateModel:
    def test_perfect_predictions(self, rng):
        truths = [random_labels(rng, (8, 8)) for _ in range(3)]
        report = evaluate_model(truths, truths)
        for row in (report.liver, report.tumor):
            assert (row.pixel_accuracy, row.iou, row.rand_index) == (1.0, 1.0, 1.0)

    def test_pooled_matches_merged_counts(self, rng):
        preds = [random_labels(rng, (6, 6)) for _ in range(4)]
        truths = [random_labels(rng, (6, 6)) for _ in range(4)]
        report = evaluate_model(preds, truths)
        counts = merge(confusion((p == 2).astype(np.uint8), (t == 2).astype(np.uint8)) for p, t in zip(preds, truths))
        assert report.tumor.iou == iou(counts)
        assert report.n_images == 4

    def test_per_image_averages(self, rng):
        preds = [random_labels(rng, (6, 6)) for _ in range(3)]
        truths = [random_labels(rng, (6, 6)) for _ in range(3)]
        report = evaluate_model(preds, truths, aggregation=Aggregation.PER_IMAGE)
        expected = np.mean([iou(confusion((p >= 1).astype(np.uint8), (t >= 1).astype(np.uint8))) for p, t in zip(preds, truths)])
        assert report.liver.iou == pytest.approx(expected)

    def test_tumor_auc_requires_both_classes(self, rng):
        truths = [np.ones((4, 4), dtype=np.uint8)]
        report = evaluate_model(truths, truths, tumor_probs=[rng.uniform(0.1, 0.9, size=(4, 4))])
        assert report.tumor.restricted_auc is None
        assert report.tumor.chosen_threshold is None

    def test_misaligned_sets_rejected(self, rng):
        with pytest.raises(ValueError, match="misaligned"):
            evaluate_model([random_labels(rng, (4, 4))], [])

    def test_report_csv_uses_na(self, tmp_path, rng):
        truths = [np.ones((4, 4), dtype=np.uint8)]
        write_report_csv(evaluate_model(truths, truths), tmp_path / "report.csv")
        with open(tmp_path / "report.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["class", "pixel_acc", "iou", "rand_index", "rauc", "threshold"]
        assert rows[2][0] == "tumor" and rows[2][4] == "NA"

    def test_roc_csv_rows(self, tmp_path):
        curve = restricted_roc(np.array([0.2, 0.7]), np.array([0, 1]))
        write_roc_csv(curve, tmp_path / "roc.csv")
        lines = (tmp_path / "roc.csv").read_text().splitlines()
        assert lines[0] == "threshold,fpr,tpr"
        assert len(lines) == len(curve.points) + 1
