"""
Dataset directory layout, deterministic splits and augmentation.

Layout:
    root/images/<stem>.pgm | .ppm | .stv
    root/masks/<stem>.pgm  (2D, {0, 255})  or  <stem>.stv (3D, {0, 1})

Images and masks are paired by file stem.
"""
import logging
from pathlib import Path

import numpy as np

from src.data.images import (
    Sample, load_image, load_mask, save_image, save_mask, save_volume,
)
from src.utils.errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".stv")
MASK_SUFFIXES = (".pgm", ".stv")


def load_dataset(root):
    """
    Load all image/mask pairs under root.

    Args:
        root (str or Path): Dataset root

    Returns:
        list of Sample: Sorted by stem

    Raises:
        ConfigurationError: If the directory holds no images
        DataError: If an image has no mask
    """
    root = Path(root)
    image_dir, mask_dir = root / "images", root / "masks"
    paths = sorted(
        p for p in image_dir.glob("*") if p.suffix.lower() in IMAGE_SUFFIXES
    ) if image_dir.is_dir() else []
    if not paths:
        raise ConfigurationError(f"No images found under {image_dir}")

    samples = []
    for path in paths:
        mask_path = next(
            (mask_dir / f"{path.stem}{suffix}" for suffix in MASK_SUFFIXES
             if (mask_dir / f"{path.stem}{suffix}").exists()),
            None,
        )
        if mask_path is None:
            raise DataError(f"No mask for image {path.name} in {mask_dir}")
        samples.append(Sample(image=load_image(path), mask=load_mask(mask_path), id=path.stem))

    logger.info(f"Loaded {len(samples)} samples from {root}")
    return samples


def write_dataset(samples, root):
    """
    Write samples in the dataset layout.

    2D images become 8-bit PGM (C = 1) or PPM (C = 3) with {0, 255} PGM
    masks; 3D samples become STV1 volumes for both image and mask.

    Args:
        samples (list of Sample): Samples to write
        root (str or Path): Dataset root (created if missing)
    """
    root = Path(root)
    image_dir, mask_dir = root / "images", root / "masks"
    image_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    for sample in samples:
        if sample.image.dims == 3:
            save_volume(image_dir / f"{sample.id}.stv", sample.image)
            save_volume(mask_dir / f"{sample.id}.stv", sample.mask.astype(np.float32))
        else:
            suffix = ".pgm" if sample.image.channels == 1 else ".ppm"
            save_image(image_dir / f"{sample.id}{suffix}", sample.image)
            save_mask(mask_dir / f"{sample.id}.pgm", sample.mask)

    logger.info(f"Wrote {len(samples)} samples to {root}")


def split(samples, fractions, seed):
    """
    Seeded shuffle then partition into train / validation / test.

    Train and validation sizes are round(f * n); test takes the rest.

    Args:
        samples (list): Items to split
        fractions (sequence of 3 floats): Summing to 1
        seed (int): Shuffle seed

    Returns:
        tuple: (train, val, test) lists

    Raises:
        ConfigurationError: If fractions are invalid or a part is empty
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be three non-negative values summing to 1, got {fractions}")

    n = len(samples)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ConfigurationError(
            f"Splitting {n} samples by {fractions} leaves an empty partition "
            f"({n_train}/{n_val}/{n_test})"
        )

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [samples[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def check_samples(samples, dims, channels=None):
    """
    Verify that all samples match the configured dimensionality and channels.

    Raises:
        ConfigurationError: On the first mismatch
    """
    for sample in samples:
        if sample.image.dims != dims:
            raise ConfigurationError(
                f"Configured dims={dims} but sample '{sample.id}' is {sample.image.dims}D"
            )
        if channels is not None and sample.image.channels != channels:
            raise ConfigurationError(
                f"Configured channels={channels} but sample '{sample.id}' has "
                f"{sample.image.channels}"
            )


def augment(data, mask, rng, p=0.5):
    """
    Random horizontal flip and 90 degree rotation, each with probability p.

    Rotation acts in the (H, W) plane and is only applied when H == W.

    Args:
        data (np.ndarray): (H, W, C) or (D, H, W, C)
        mask (np.ndarray): Spatial mask
        rng (np.random.Generator): Random source
        p (float): Probability of each transform

    Returns:
        tuple: (data, mask) transformed copies
    """
    spatial = mask.ndim
    h_axis, w_axis = spatial - 2, spatial - 1
    if rng.random() < p:
        data = np.flip(data, axis=w_axis)
        mask = np.flip(mask, axis=w_axis)
    if rng.random() < p and mask.shape[h_axis] == mask.shape[w_axis]:
        k = int(rng.integers(1, 4))
        data = np.rot90(data, k=k, axes=(h_axis, w_axis))
        mask = np.rot90(mask, k=k, axes=(h_axis, w_axis))
    return np.ascontiguousarray(data), np.ascontiguousarray(mask)
