"""
Segmentation metrics: Dice on thresholded predictions and PRAUC (average
precision) on soft predictions.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from src.features.patching import ravel
from src.utils.errors import DimensionError, UndefinedMetricError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


def binarize(pred_soft, threshold=DEFAULT_THRESHOLD):
    """Foreground where pred >= threshold."""
    return np.asarray(pred_soft) >= threshold


def dice(pred_soft, gt, threshold=DEFAULT_THRESHOLD):
    """
    Dice accuracy 2|P & G| / (|P| + |G|) of thresholded predictions.

    Args:
        pred_soft (np.ndarray): Soft predictions
        gt (np.ndarray): Binary ground truth of the same shape
        threshold (float): Binarization threshold

    Returns:
        float: Dice in [0, 1]; 1.0 when both sets are empty

    Raises:
        DimensionError: On shape mismatch
    """
    pred_soft = np.asarray(pred_soft)
    gt = np.asarray(gt)
    if pred_soft.shape != gt.shape:
        raise DimensionError(f"dice shape mismatch: prediction {pred_soft.shape} vs ground truth {gt.shape}")
    pred = binarize(pred_soft, threshold)
    truth = gt > 0
    total = int(pred.sum()) + int(truth.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, truth).sum()) / total


def _grouped_counts(scores, labels):
    """True positives and predicted positives at each distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = (np.asarray(labels).ravel() > 0).astype(np.int64)
    if scores.shape != labels.shape:
        raise DimensionError(f"prauc shape mismatch: {scores.shape} scores vs {labels.shape} labels")

    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    hits = np.cumsum(labels[order])

    # last index of each block of equal scores
    block_end = np.ones(len(sorted_scores), dtype=bool)
    block_end[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    ends = np.flatnonzero(block_end)
    return hits[ends], ends + 1, sorted_scores[ends], int(labels.sum())


def precision_recall_curve(scores, labels):
    """
    Precision and recall at every distinct score threshold.

    Args:
        scores (array_like): Soft scores
        labels (array_like): Binary labels

    Returns:
        tuple: (precision, recall, thresholds), thresholds descending

    Raises:
        UndefinedMetricError: If there are no positive labels
    """
    tp, predicted, thresholds, positives = _grouped_counts(scores, labels)
    if positives == 0:
        raise UndefinedMetricError("Precision-recall is undefined without positive labels")
    return tp / predicted, tp / positives, thresholds


def prauc(scores, labels):
    """
    Average precision sum_k (R_k - R_{k-1}) P_k over a descending sweep,
    with tied scores processed as one step.

    Args:
        scores (array_like): Soft scores
        labels (array_like): Binary labels

    Returns:
        float: Average precision in [0, 1]

    Raises:
        UndefinedMetricError: If there are no positive labels
    """
    tp, predicted, _, positives = _grouped_counts(scores, labels)
    if positives == 0:
        raise UndefinedMetricError("PRAUC is undefined without positive labels")
    previous = np.concatenate(([0], tp[:-1]))
    terms = [
        ((int(t) - int(p)) / positives) * (int(t) / int(n))
        for t, p, n in zip(tp, previous, predicted)
        if t != p
    ]
    return math.fsum(terms)


def _uniform_patches(mask, K, dims):
    _, patches = ravel(np.asarray(mask, dtype=np.uint8), K, dims=dims)
    flat = patches[..., 0]
    return np.all(flat == flat[:, :1], axis=1)


def uniform_patch_fraction(mask, K, dims=2, reference=None):
    """
    Fraction of K-patches that are entirely foreground or entirely background.

    With a reference mask only the patches that are mixed in the reference
    are counted, so background far from any object does not dominate.

    Args:
        mask (np.ndarray): Binary prediction
        K (int): Patch edge
        dims (int): Spatial dimensions
        reference (np.ndarray, optional): Ground truth selecting mixed patches

    Returns:
        float: Fraction in [0, 1]; NaN if the reference has no mixed patch
    """
    uniform = _uniform_patches(mask, K, dims)
    if reference is not None:
        mixed = ~_uniform_patches(reference, K, dims)
        if not mixed.any():
            return float("nan")
        uniform = uniform[mixed]
    return float(np.mean(uniform))


@dataclass
class EvalReport:
    """
    Per-image Dice plus pooled PRAUC.

    Args:
        ids (list of str): Image identifiers
        dices (list of float): Per-image Dice
        prauc (float): Average precision over all pixels of all images
    """

    ids: list = field(default_factory=list)
    dices: list = field(default_factory=list)
    prauc: float = float("nan")

    @property
    def mean_dice(self):
        return float(np.mean(self.dices)) if self.dices else float("nan")

    @property
    def std_dice(self):
        return float(np.std(self.dices)) if self.dices else float("nan")

    @classmethod
    def from_predictions(cls, ids, soft_predictions, ground_truths, threshold=DEFAULT_THRESHOLD):
        """
        Build a report from soft predictions and binary masks.

        PRAUC is undefined (NaN, with a warning) when no image has foreground.
        """
        dices = [dice(s, g, threshold) for s, g in zip(soft_predictions, ground_truths)]
        scores = np.concatenate([np.ravel(s) for s in soft_predictions])
        labels = np.concatenate([np.ravel(g) for g in ground_truths])
        try:
            area = prauc(scores, labels)
        except UndefinedMetricError as e:
            logger.warning(f"{e}; reporting NaN")
            area = float("nan")
        return cls(ids=list(ids), dices=dices, prauc=area)

    def to_frame(self):
        """Rows 'image,dice' followed by mean, std and prauc summary rows."""
        rows = pd.DataFrame({"image": self.ids, "dice": self.dices})
        summary = pd.DataFrame({
            "image": ["mean", "std", "prauc"],
            "dice": [self.mean_dice, self.std_dice, self.prauc],
        })
        return pd.concat([rows, summary], ignore_index=True)

    def save_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def __str__(self):
        return (f"Dice {self.mean_dice:.4f} +/- {self.std_dice:.4f} over {len(self.dices)} images, "
                f"PRAUC {self.prauc:.4f}")
