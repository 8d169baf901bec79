"""
Synthetic blob segmentation data for desk-scale runs.
"""
import logging

import numpy as np

from src.data.images import Image, Sample
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

# Semi-axis range as a fraction of the image edge
AXIS_RANGE = {2: (0.10, 0.25), 3: (0.12, 0.30)}
BLOB_INTENSITY = (0.6, 0.9)
BACKGROUND_INTENSITY = (0.1, 0.3)
NOISE_SIGMA = 0.05
MAX_BLOBS = 4


def _ellipse_mask(rng, size, dims):
    """Boolean mask of one random ellipse (2D, rotated) or ellipsoid (3D)."""
    low, high = AXIS_RANGE[dims]
    center = rng.uniform(0, size, size=dims)
    axes = rng.uniform(low * size, high * size, size=dims)
    coords = np.meshgrid(*([np.arange(size) + 0.5] * dims), indexing="ij")

    if dims == 2:
        angle = rng.uniform(0.0, np.pi)
        dy, dx = coords[0] - center[0], coords[1] - center[1]
        u = dx * np.cos(angle) + dy * np.sin(angle)
        v = -dx * np.sin(angle) + dy * np.cos(angle)
        return (u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0

    distance = sum(((c - m) / a) ** 2 for c, m, a in zip(coords, center, axes))
    return distance <= 1.0


def _generate_one(rng, size, dims):
    shape = (size,) * dims
    while True:
        image = np.full(shape, rng.uniform(*BACKGROUND_INTENSITY))
        mask = np.zeros(shape, dtype=bool)
        for _ in range(rng.integers(1, MAX_BLOBS + 1)):
            blob = _ellipse_mask(rng, size, dims)
            image[blob] = rng.uniform(*BLOB_INTENSITY)
            mask |= blob
        image += rng.normal(0.0, NOISE_SIGMA, size=shape)
        if mask.any() and not mask.all():
            return np.clip(image, 0.0, 1.0), mask


def gen_synthetic(n, size, seed, dims=2):
    """
    Generate images with 1-4 bright ellipses on a darker noisy background.

    Each image has a uniform background in [0.1, 0.3], blobs of intensity
    [0.6, 0.9], additive Gaussian noise (sigma 0.05) and is clamped to
    [0, 1]. The mask is the union of the blobs. Output is fully determined by
    the seed.

    Args:
        n (int): Number of samples (>= 1)
        size (int): Edge length (>= 16)
        seed (int): RNG seed
        dims (int): 2 for images, 3 for volumes

    Returns:
        list of Sample
    """
    if n < 1 or size < 16:
        raise ConfigurationError(f"gen_synthetic needs n >= 1 and size >= 16, got n={n}, size={size}")
    if dims not in AXIS_RANGE:
        raise ConfigurationError(f"dims must be 2 or 3, got {dims}")

    logger.info(f"Generating {n} synthetic {dims}D samples of edge {size} (seed {seed})")
    rng = np.random.default_rng(seed)
    samples = []
    for index in range(n):
        image, mask = _generate_one(rng, size, dims)
        samples.append(Sample(
            image=Image(data=image[..., np.newaxis], bit_depth=8),
            mask=mask.astype(np.uint8),
            id=f"synth_{index:04d}",
        ))

    fraction = np.mean([s.mask.mean() for s in samples])
    logger.info(f"Generated {n} samples, mean foreground fraction {fraction:.3f}")
    return samples
