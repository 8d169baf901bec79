"""
Segmentation losses on raw logits, each returning (loss, d loss / d logits).
"""
import numpy as np

from src.utils.errors import ConfigurationError, DimensionError

CROSS_ENTROPY = "cross-entropy"
DICE = "dice"
DICE_EPSILON = 1e-7


def sigmoid(z):
    """Numerically stable logistic function."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _check(logits, targets):
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise DimensionError(f"Loss shape mismatch: logits {logits.shape} vs targets {targets.shape}")
    return logits, targets


def bce_loss(logits, targets):
    """
    Mean binary cross-entropy of sigmoid(logits).

    Uses softplus(z) - t * z so large |z| neither overflows nor loses the
    small loss of confident correct predictions.

    Args:
        logits (np.ndarray): Raw logits, any shape
        targets (np.ndarray): Binary targets, same shape

    Returns:
        tuple: (loss, gradient w.r.t. logits)
    """
    logits, targets = _check(logits, targets)
    count = logits.size
    loss = float(np.sum(np.logaddexp(0.0, logits) - targets * logits) / count)
    grad = (sigmoid(logits) - targets) / count
    return loss, grad


def dice_loss(logits, targets, epsilon=DICE_EPSILON):
    """
    Soft Dice loss 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps), p = sigmoid(logits).

    All entries are pooled, so callers pass every patch of a batch at once.

    Args:
        logits (np.ndarray): Raw logits, any shape
        targets (np.ndarray): Binary targets, same shape
        epsilon (float): Smoothing constant

    Returns:
        tuple: (loss, gradient w.r.t. logits)
    """
    logits, targets = _check(logits, targets)
    p = sigmoid(logits)
    overlap = 2.0 * np.sum(p * targets) + epsilon
    total = np.sum(p) + np.sum(targets) + epsilon
    loss = float(1.0 - overlap / total)
    grad_p = -(2.0 * targets * total - overlap) / (total * total)
    return loss, grad_p * p * (1.0 - p)


LOSSES = {
    CROSS_ENTROPY: bce_loss,
    DICE: dice_loss,
}


def get_loss(name):
    """Look up a loss function by config name."""
    if name not in LOSSES:
        raise ConfigurationError(f"Unknown loss '{name}'; expected one of {', '.join(LOSSES)}")
    return LOSSES[name]
