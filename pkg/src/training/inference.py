"""
Patch-wise prediction of whole images with a trained MPS.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from src.data.images import Image, normalize_image
from src.features.patching import ravel, unravel
from src.training.losses import sigmoid
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

# Patches per work item; fixed so that the reduction order never depends on
# the thread count
CHUNK_PATCHES = 256


def default_threads():
    return os.cpu_count() or 1


def chunk_slices(count, chunk=CHUNK_PATCHES):
    """Consecutive slices covering range(count)."""
    return [slice(start, min(start + chunk, count)) for start in range(0, count, chunk)]


def parallel_map(fn, items, threads=1):
    """fn over items in a thread pool; results keep the input order."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def map_chunks(fn, count, threads=1, chunk=CHUNK_PATCHES):
    """
    Apply fn to consecutive slices of range(count), possibly in threads.

    Results come back in slice order regardless of the thread count.

    Args:
        fn (callable): Called as fn(slice)
        count (int): Number of items
        threads (int): Worker threads; 1 runs inline
        chunk (int): Items per slice

    Returns:
        list: fn results in slice order
    """
    return parallel_map(fn, chunk_slices(count, chunk), threads)


def patch_features(data, K, dims, feature_map):
    """
    Ravel an image and lift every pixel through the local feature map.

    Args:
        data (np.ndarray or Image): (H, W, C) or (D, H, W, C) intensities
        K (int): Patch edge
        dims (int): Spatial dimensions
        feature_map (LocalFeatureMap): Local feature map

    Returns:
        tuple: (PatchGrid, features [patch_count, K**dims, C*d])
    """
    grid, patches = ravel(data, K, dims=dims)
    return grid, feature_map.apply_channels(patches)


def check_compatible(model, image):
    """
    Raise ConfigurationError if an image does not fit the model's dims/channels.
    """
    if image.dims != model.dims:
        raise ConfigurationError(f"Model expects {model.dims}D input but the image is {image.dims}D")
    if image.channels != model.C:
        raise ConfigurationError(
            f"Model expects {model.C} channel(s) but the image has {image.channels}"
        )


def predict_logits(model, features, threads=1):
    """
    Logits for a stack of patches, evaluated in chunks.

    Args:
        model (MPSModel): Trained model
        features (np.ndarray): [B, N, C*d]
        threads (int): Worker threads

    Returns:
        np.ndarray: [B, P]
    """
    parts = map_chunks(lambda s: model.forward(features[s]), len(features), threads)
    return np.concatenate(parts, axis=0)


def foreground(probabilities, M):
    """Foreground probability per pixel from a [..., M] prediction."""
    return probabilities if M == 1 else probabilities[..., M - 1]


def predict_image(model, image, normalize=True, threads=1):
    """
    Per-pixel foreground probabilities for one image.

    Args:
        model (MPSModel): Trained model carrying its feature map
        image (Image): Input image
        normalize (bool): Min-max normalize before prediction, as in training
        threads (int): Worker threads

    Returns:
        np.ndarray: Probabilities of the image's spatial shape

    Raises:
        ConfigurationError: If the model has no feature map or the image does
            not match its dims/channels
    """
    if model.feature_map is None:
        raise ConfigurationError("Model has no feature map; cannot lift pixels")
    if not isinstance(image, Image):
        image = Image(data=image)
    check_compatible(model, image)
    if normalize:
        image = normalize_image(image)

    grid, features = patch_features(image.data, model.K, model.dims, model.feature_map)
    logits = predict_logits(model, features, threads)
    probabilities = unravel(grid, sigmoid(logits))
    return foreground(probabilities, model.M)


def predict_samples(model, samples, normalize=True, threads=1):
    """Soft foreground predictions for every sample, in order."""
    predictions = []
    for sample in samples:
        predictions.append(predict_image(model, sample.image, normalize=normalize, threads=threads))
        logger.debug(f"Predicted '{sample.id}'")
    return predictions
