"""
Tests for Dice, PRAUC and evaluation reports.
"""
import math
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from src.evaluation.metrics import (
    EvalReport, dice, prauc, precision_recall_curve, uniform_patch_fraction,
)
from src.utils.errors import DimensionError, UndefinedMetricError


def brute_force_prauc(scores, labels):
    """Average precision by thresholding at every distinct score, O(n^2)."""
    positives = sum(labels)
    terms = []
    previous_recall = 0.0
    for threshold in sorted(set(scores), reverse=True):
        selected = [l for s, l in zip(scores, labels) if s >= threshold]
        tp = sum(selected)
        recall_step = (tp / positives) - previous_recall
        if tp > 0 and recall_step != 0:
            hits_before = round(previous_recall * positives)
            terms.append(((tp - hits_before) / positives) * (tp / len(selected)))
        previous_recall = tp / positives
    return math.fsum(terms)


class TestDice(unittest.TestCase):
    """Tests for thresholded Dice."""

    def test_identical(self):
        mask = np.array([[0, 1], [1, 1]])
        self.assertEqual(dice(mask.astype(float), mask), 1.0)

    def test_disjoint(self):
        self.assertEqual(dice(np.array([1.0, 0.0]), np.array([0, 1])), 0.0)

    def test_two_thirds(self):
        self.assertEqual(dice(np.array([0.9, 0.6, 0.1]), np.array([1, 0, 0])), 2.0 / 3.0)

    def test_both_empty(self):
        self.assertEqual(dice(np.zeros((3, 3)), np.zeros((3, 3))), 1.0)

    def test_threshold_is_inclusive(self):
        self.assertEqual(dice(np.array([0.5]), np.array([1])), 1.0)

    def test_symmetric_and_permutation_invariant(self):
        rng = np.random.default_rng(4)
        a = (rng.uniform(size=50) > 0.5).astype(float)
        b = (rng.uniform(size=50) > 0.4).astype(float)
        order = rng.permutation(50)
        self.assertEqual(dice(a, b), dice(b, a))
        self.assertEqual(dice(a, b), dice(a[order], b[order]))

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            dice(np.zeros(3), np.zeros(4))


class TestPrauc(unittest.TestCase):
    """Tests for average precision."""

    def test_perfect_separation(self):
        self.assertEqual(prauc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]), 1.0)

    def test_all_scores_equal(self):
        labels = [1, 0, 0, 1, 0, 0, 0, 0]
        self.assertEqual(prauc([0.5] * 8, labels), 2 / 8)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(123)
        # coarse scores force many ties
        scores = list(np.round(rng.uniform(size=1000), 2))
        labels = [int(x) for x in rng.uniform(size=1000) > 0.7]
        self.assertEqual(prauc(scores, labels), brute_force_prauc(scores, labels))

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(8)
        scores = rng.uniform(size=200)
        labels = (rng.uniform(size=200) > 0.5).astype(int)
        self.assertEqual(prauc(scores, labels), prauc(np.exp(3.0 * scores), labels))

    def test_no_positives(self):
        with self.assertRaises(UndefinedMetricError):
            prauc([0.1, 0.2], [0, 0])

    def test_curve_ends_at_full_recall(self):
        precision, recall, thresholds = precision_recall_curve([0.9, 0.4, 0.4, 0.1], [1, 0, 1, 0])
        np.testing.assert_allclose(recall, [0.5, 1.0, 1.0])
        np.testing.assert_allclose(precision, [1.0, 2 / 3, 0.5])
        np.testing.assert_array_equal(thresholds, [0.9, 0.4, 0.1])


class TestUniformPatchFraction(unittest.TestCase):
    """Tests for the patch uniformity measure."""

    def test_fractions(self):
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[:2, :2] = 1
        self.assertEqual(uniform_patch_fraction(mask, 2), 1.0)
        mask[3, 3] = 1
        self.assertEqual(uniform_patch_fraction(mask, 2), 0.75)

    def test_restricted_to_mixed_reference_patches(self):
        truth = np.zeros((4, 4), dtype=np.uint8)
        truth[0, 0] = 1
        truth[2:, 2:] = 1
        pred = np.zeros((4, 4), dtype=np.uint8)
        self.assertEqual(uniform_patch_fraction(pred, 2, reference=truth), 1.0)
        pred[0, 0] = 1
        self.assertEqual(uniform_patch_fraction(pred, 2, reference=truth), 0.0)
        self.assertTrue(math.isnan(uniform_patch_fraction(pred, 2, reference=np.zeros((4, 4)))))


class TestEvalReport(unittest.TestCase):
    """Tests for evaluation reports."""

    def setUp(self):
        self.gts = [np.array([[1, 0], [0, 0]]), np.array([[1, 1], [0, 0]])]
        self.preds = [np.array([[0.9, 0.1], [0.2, 0.3]]), np.array([[0.8, 0.2], [0.6, 0.1]])]

    def test_summary(self):
        report = EvalReport.from_predictions(["a", "b"], self.preds, self.gts)
        expected = [dice(p, g) for p, g in zip(self.preds, self.gts)]
        self.assertEqual(report.dices, expected)
        self.assertLessEqual(abs(report.mean_dice - np.mean(expected)), 1e-15)
        self.assertEqual(report.std_dice, float(np.std(expected)))
        self.assertTrue(0.0 <= report.prauc <= 1.0)

    def test_csv_layout(self):
        report = EvalReport.from_predictions(["a", "b"], self.preds, self.gts)
        frame = report.to_frame()
        self.assertEqual(list(frame.columns), ["image", "dice"])
        self.assertEqual(list(frame["image"]), ["a", "b", "mean", "std", "prauc"])

    def test_save_csv(self):
        report = EvalReport.from_predictions(["a", "b"], self.preds, self.gts)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "report.csv")
            report.save_csv(path)
            frame = pd.read_csv(path)
        self.assertEqual(len(frame), 5)

    def test_no_foreground_gives_nan_prauc(self):
        report = EvalReport.from_predictions(["z"], [np.zeros((2, 2))], [np.zeros((2, 2))])
        self.assertTrue(math.isnan(report.prauc))
        self.assertEqual(report.dices, [1.0])


if __name__ == '__main__':
    unittest.main()
