"""
Ravel images into non-overlapping K x K (or K x K x K) patches and tile
patch predictions back.

Layout conventions (row-major throughout):
- 2D images are arrays (H, W, C), 3D volumes (D, H, W, C).
- Images are zero-padded at the bottom/right (and back) to multiples of K.
- Patches are enumerated row-major over the patch lattice.
- Inside a patch, pixels are flattened row-major (z, then y, then x).
"""
from dataclasses import dataclass

import numpy as np

from src.utils.errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class PatchGrid:
    """
    Bookkeeping for one image's patch lattice.

    Args:
        image_dims (tuple of int): Spatial dims, (H, W) or (D, H, W)
        K (int): Patch edge / stride
        channels (int): Channels per pixel
    """

    image_dims: tuple
    K: int
    channels: int = 1

    @property
    def dims(self):
        return len(self.image_dims)

    @property
    def padded_dims(self):
        return tuple(-(-extent // self.K) * self.K for extent in self.image_dims)

    @property
    def lattice(self):
        """Number of patches along each axis."""
        return tuple(extent // self.K for extent in self.padded_dims)

    @property
    def patch_count(self):
        return int(np.prod(self.lattice))

    @property
    def sites(self):
        """Pixels per patch, i.e. MPS chain length."""
        return self.K ** self.dims


def _check_patch_size(K):
    if int(K) != K or K < 2:
        raise ConfigurationError(f"patch_size K must be an integer >= 2, got {K}")


def _split_axes(dims):
    # (P0, K, P1, K, ...) -> (P0, P1, ..., K, K, ..., C)
    lattice_axes = tuple(range(0, 2 * dims, 2))
    inner_axes = tuple(range(1, 2 * dims, 2))
    return lattice_axes + inner_axes + (2 * dims,)


def ravel(image, K, dims=2):
    """
    Split an image into flattened patches.

    Args:
        image (np.ndarray): Array (H, W[, C]) for dims=2, (D, H, W[, C]) for
            dims=3; a missing channel axis means C = 1. Objects with a
            ``data`` attribute (data.Image) are accepted.
        K (int): Patch edge
        dims (int): Number of spatial dimensions, 2 or 3

    Returns:
        tuple: (PatchGrid, np.ndarray of shape (patch_count, K**dims, C))

    Raises:
        ConfigurationError: If K < 2 or dims is not 2 or 3
        DimensionError: If the image rank does not fit dims
    """
    _check_patch_size(K)
    K = int(K)
    if dims not in (2, 3):
        raise ConfigurationError(f"dims must be 2 or 3, got {dims}")

    array = np.asarray(getattr(image, "data", image))
    if array.ndim == dims:
        array = array[..., np.newaxis]
    if array.ndim != dims + 1:
        raise DimensionError(
            f"Expected a {dims}D image with optional channel axis, got shape {array.shape}"
        )
    if any(extent < 1 for extent in array.shape):
        raise DimensionError(f"Image extents must be >= 1, got {array.shape}")

    grid = PatchGrid(image_dims=tuple(array.shape[:dims]), K=K, channels=array.shape[-1])
    pad = [(0, p - e) for p, e in zip(grid.padded_dims, grid.image_dims)] + [(0, 0)]
    padded = np.pad(array, pad, mode="constant", constant_values=0)

    split_shape = []
    for n in grid.lattice:
        split_shape.extend([n, K])
    blocks = padded.reshape(tuple(split_shape) + (grid.channels,))
    blocks = blocks.transpose(_split_axes(dims))
    patches = blocks.reshape(grid.patch_count, grid.sites, grid.channels)
    return grid, np.ascontiguousarray(patches)


def unravel(grid, patch_predictions):
    """
    Tile per-patch predictions back into an image-sized array.

    Args:
        grid (PatchGrid): Grid returned by ravel
        patch_predictions (array_like): (patch_count, K**dims * M), each row
            ordered pixel-major then class

    Returns:
        np.ndarray: Shape image_dims when M == 1, else image_dims + (M,)

    Raises:
        DimensionError: On count or length mismatch
    """
    predictions = np.asarray(patch_predictions)
    if predictions.ndim != 2 or predictions.shape[0] != grid.patch_count:
        raise DimensionError(
            f"Expected {grid.patch_count} patch predictions, got array of shape {predictions.shape}"
        )
    length = predictions.shape[1]
    if length == 0 or length % grid.sites != 0:
        raise DimensionError(
            f"Patch prediction length {length} is not a multiple of {grid.sites} pixels"
        )
    classes = length // grid.sites
    dims = grid.dims
    K = grid.K

    blocks = predictions.reshape(grid.lattice + (K,) * dims + (classes,))
    # (P0, P1, ..., K, K, ..., M) -> (P0, K, P1, K, ..., M)
    order = []
    for axis in range(dims):
        order.extend([axis, dims + axis])
    order.append(2 * dims)
    padded = blocks.transpose(order).reshape(grid.padded_dims + (classes,))

    crop = tuple(slice(0, extent) for extent in grid.image_dims)
    result = padded[crop]
    if classes == 1:
        result = result[..., 0]
    return np.ascontiguousarray(result)
