"""
Dense tensor primitives used by the MPS model.

Tensors are C-contiguous (row-major) float64 numpy arrays. The helpers here
validate shapes and raise DimensionError / CapacityError instead of relying on
numpy broadcasting, so shape bugs surface with both shapes in the message.
"""
import numpy as np

from src.utils.errors import CapacityError, DimensionError

# Largest explicit tensor the oracle helpers will build (entries)
MAX_EXPLICIT_SIZE = 2 ** 24


def as_tensor(data, shape=None):
    """
    Convert data to a contiguous float64 tensor.

    Args:
        data (array_like): Values
        shape (sequence of int, optional): Target shape; product must match
            the number of values

    Returns:
        np.ndarray: Row-major float64 array

    Raises:
        DimensionError: If an extent is < 1 or the value count does not match
    """
    array = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise DimensionError(f"Tensor extents must be >= 1, got {shape}")
        if int(np.prod(shape)) != array.size:
            raise DimensionError(
                f"Cannot view {array.size} values as shape {shape}"
            )
        array = array.reshape(shape)
    elif any(s < 1 for s in array.shape):
        raise DimensionError(f"Tensor extents must be >= 1, got {array.shape}")
    return array


def flat_offset(index, shape):
    """Row-major offset of a multi-index."""
    return int(np.ravel_multi_index(tuple(index), tuple(shape), order="C"))


def multi_index(offset, shape):
    """Row-major multi-index of a flat offset."""
    return tuple(int(i) for i in np.unravel_index(int(offset), tuple(shape), order="C"))


def _require_rank(tensor, rank, name):
    if tensor.ndim != rank:
        raise DimensionError(
            f"{name} must have rank {rank}, got shape {tensor.shape}"
        )


def matvec(m, v):
    """
    Matrix-vector product.

    Args:
        m (np.ndarray): Matrix [rows, cols]
        v (np.ndarray): Vector [cols]

    Returns:
        np.ndarray: Vector [rows]

    Raises:
        DimensionError: If the inner extents differ
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _require_rank(m, 2, "matrix")
    _require_rank(v, 1, "vector")
    if m.shape[1] != v.shape[0]:
        raise DimensionError(
            f"matvec shape mismatch: matrix {m.shape} with vector {v.shape}"
        )
    return m @ v


def contract_site(site, feat):
    """
    Contract one site tensor over its physical index.

    out[a, b] = sum_i site[a, i, b] * feat[i]

    Args:
        site (np.ndarray): Site tensor [left_bond, feature_dim, right_bond]
        feat (np.ndarray): Local feature vector [feature_dim]

    Returns:
        np.ndarray: Transfer matrix [left_bond, right_bond]

    Raises:
        DimensionError: If the physical extents differ
    """
    site = np.asarray(site, dtype=np.float64)
    feat = np.asarray(feat, dtype=np.float64)
    _require_rank(site, 3, "site")
    _require_rank(feat, 1, "feature vector")
    if site.shape[1] != feat.shape[0]:
        raise DimensionError(
            f"contract_site shape mismatch: site {site.shape} with feature {feat.shape}"
        )
    return np.einsum("aib,i->ab", site, feat)


def outer_product_chain(vectors):
    """
    Explicit tensor product of a list of vectors.

    This builds the global feature map of a patch and is only meant for
    small oracle checks: the result has prod(len(v)) entries.

    Args:
        vectors (list of np.ndarray): Rank-1 tensors

    Returns:
        np.ndarray: Rank-len(vectors) tensor with out[i1..iN] = prod_j v_j[i_j]

    Raises:
        DimensionError: If the list is empty or an entry is not rank 1
        CapacityError: If the result would exceed MAX_EXPLICIT_SIZE entries
    """
    if len(vectors) == 0:
        raise DimensionError("outer_product_chain needs at least one vector")
    vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
    for v in vectors:
        _require_rank(v, 1, "chain entry")

    size = 1
    for v in vectors:
        size *= v.shape[0]
        if size > MAX_EXPLICIT_SIZE:
            raise CapacityError(
                f"Explicit product of {len(vectors)} vectors exceeds "
                f"{MAX_EXPLICIT_SIZE} entries"
            )

    result = vectors[0]
    for v in vectors[1:]:
        result = np.multiply.outer(result, v)
    return np.ascontiguousarray(result)
