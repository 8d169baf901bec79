"""
Learning curves and prediction overlays rendered to image files.
"""
import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.evaluation.metrics import DEFAULT_THRESHOLD, binarize  # noqa: E402

logger = logging.getLogger(__name__)

TRUE_POSITIVE = (0.0, 0.7, 0.0)
FALSE_NEGATIVE = (0.55, 0.55, 0.55)
FALSE_POSITIVE = (1.0, 0.4, 0.7)
OVERLAY_ALPHA = 0.6


def plot_learning_curve(history, path, title=None):
    """
    Train/validation loss and validation Dice per epoch.

    Args:
        history (pd.DataFrame): Rows with epoch, train_loss, val_loss, val_dice
        path (str or Path): Output image path
        title (str, optional): Figure title
    """
    fig, (loss_ax, dice_ax) = plt.subplots(1, 2, figsize=(10, 4))
    loss_ax.plot(history["epoch"], history["train_loss"], label="train")
    loss_ax.plot(history["epoch"], history["val_loss"], label="validation")
    loss_ax.set_xlabel("epoch")
    loss_ax.set_ylabel("loss")
    loss_ax.legend()

    dice_ax.plot(history["epoch"], history["val_dice"], color="tab:green")
    dice_ax.set_xlabel("epoch")
    dice_ax.set_ylabel("validation Dice")
    dice_ax.set_ylim(0.0, 1.0)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    logger.info(f"Saved learning curve to {path}")


def _middle_slice(array):
    """Central depth slice of a volume; 2D arrays pass through."""
    array = np.asarray(array)
    return array[array.shape[0] // 2] if array.ndim == 3 else array


def overlay_colors(pred_soft, gt, threshold=DEFAULT_THRESHOLD):
    """
    RGBA layer marking true positives green, false negatives grey and false
    positives pink; true negatives are transparent.
    """
    pred = binarize(pred_soft, threshold)
    truth = np.asarray(gt) > 0
    rgba = np.zeros(truth.shape + (4,))
    for selector, color in (
        (pred & truth, TRUE_POSITIVE),
        (~pred & truth, FALSE_NEGATIVE),
        (pred & ~truth, FALSE_POSITIVE),
    ):
        rgba[selector, :3] = color
        rgba[selector, 3] = OVERLAY_ALPHA
    return rgba


def plot_overlay(image, gt, pred_soft, path, title=None, threshold=DEFAULT_THRESHOLD):
    """
    Draw a prediction over its image.

    Volumes are shown by their central depth slice.

    Args:
        image (np.ndarray): (H, W[, C]) or (D, H, W[, C]) intensities in [0, 1]
        gt (np.ndarray): Binary ground truth, spatial shape
        pred_soft (np.ndarray): Soft prediction, spatial shape
        path (str or Path): Output image path
        title (str, optional): Axes title
        threshold (float): Binarization threshold
    """
    gt = np.asarray(gt)
    image = np.asarray(image)
    if image.ndim > gt.ndim:
        image = image[..., 0] if image.shape[-1] != 3 else image
    if gt.ndim == 3:
        image, gt, pred_soft = _middle_slice(image), _middle_slice(gt), _middle_slice(pred_soft)

    fig, ax = plt.subplots(1, 1, figsize=(5, 5))
    ax.imshow(image, cmap="gray", vmin=0.0, vmax=1.0)
    ax.imshow(overlay_colors(pred_soft, gt, threshold))
    ax.set_xticks(())
    ax.set_yticks(())
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)
    logger.debug(f"Saved overlay to {path}")
