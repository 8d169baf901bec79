"""
Model checkpoint files.

Layout (all integers little-endian):

    b"STNT" | u32 version | u32 metadata length | metadata JSON (UTF-8)
    | parameter arrays, sites 0..N-1 then the output tensor

Arrays are stored as little-endian float64 by default, or float32 when the
metadata says so. Metadata is written with sorted keys and no timestamps so
identical models produce identical files.
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from src.features.featuremaps import LocalFeatureMap
from src.network.mps import MPSModel
from src.utils.errors import ConfigurationError, ParseError

logger = logging.getLogger(__name__)

MAGIC = b"STNT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
STORAGE_DTYPES = {"float64": "<f8", "float32": "<f4"}


def encode_checkpoint(model, metadata=None, dtype="float64"):
    """
    Serialize a model to checkpoint bytes.

    Args:
        model (MPSModel): Model to store
        metadata (dict, optional): Extra JSON-serializable metadata (config,
            training statistics)
        dtype (str): "float64" or "float32" storage

    Returns:
        bytes: Checkpoint contents
    """
    if dtype not in STORAGE_DTYPES:
        raise ConfigurationError(f"Checkpoint dtype must be one of {list(STORAGE_DTYPES)}, got {dtype}")

    header = {
        "model": dict(model.hyperparameters(), num_sites=model.num_sites),
        "feature_map": model.feature_map.to_dict() if model.feature_map is not None else None,
        "dtype": dtype,
        "shapes": [list(p.shape) for p in model.parameters()],
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")

    storage = STORAGE_DTYPES[dtype]
    payload = b"".join(np.ascontiguousarray(p, dtype=storage).tobytes() for p in model.parameters())
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)) + blob + payload


def decode_checkpoint(raw, path=None):
    """
    Rebuild a model from checkpoint bytes.

    Args:
        raw (bytes): Checkpoint contents
        path (str, optional): Source path for diagnostics

    Returns:
        tuple: (MPSModel, metadata dict)

    Raises:
        ParseError: On bad magic, unsupported version, corrupt metadata or a
            payload that does not match the recorded shapes or hyperparameters
    """
    if len(raw) < _HEADER.size:
        raise ParseError("File shorter than checkpoint header", offset=len(raw), path=path)
    magic, version, length = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ParseError(f"Bad checkpoint magic {magic!r}; expected {MAGIC!r}", offset=0, path=path)
    if version != FORMAT_VERSION:
        raise ParseError(f"Unsupported checkpoint version {version}", offset=4, path=path)

    start = _HEADER.size
    if start + length > len(raw):
        raise ParseError("Truncated checkpoint metadata", offset=len(raw), path=path)
    try:
        header = json.loads(raw[start:start + length].decode("utf-8"))
        hyper = header["model"]
        shapes = [tuple(s) for s in header["shapes"]]
        storage = STORAGE_DTYPES[header["dtype"]]
    except (ValueError, KeyError, TypeError) as e:
        raise ParseError(f"Corrupt checkpoint metadata: {e}", offset=start, path=path) from e

    offset = start + length
    itemsize = np.dtype(storage).itemsize
    params = []
    for shape in shapes:
        size = int(np.prod(shape)) * itemsize
        if offset + size > len(raw):
            raise ParseError(f"Truncated parameter array of shape {shape}", offset=len(raw), path=path)
        array = np.frombuffer(raw, dtype=storage, count=size // itemsize, offset=offset)
        params.append(array.astype(np.float64).reshape(shape))
        offset += size
    if offset != len(raw) or not params:
        raise ParseError(f"{len(raw) - offset} trailing bytes after parameters", offset=offset, path=path)

    feature_map = header.get("feature_map")
    try:
        model = MPSModel(
            hyper["K"], hyper["M"], hyper["C"], hyper["d"], hyper["bond_dim"], hyper["dims"],
            sites=params[:-1], output=params[-1],
            feature_map=LocalFeatureMap.from_dict(feature_map) if feature_map else None,
            num_sites=hyper.get("num_sites"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Checkpoint metadata does not match its parameters: {e}", offset=start, path=path) from e
    return model, header.get("metadata", {})


def save_checkpoint(path, model, metadata=None, dtype="float64"):
    """Write a checkpoint file."""
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model, metadata, dtype))
    logger.info(f"Saved checkpoint {path} ({model.n_params} parameters)")


def load_checkpoint(path):
    """
    Read a checkpoint file.

    Returns:
        tuple: (MPSModel, metadata dict)
    """
    path = Path(path)
    model, metadata = decode_checkpoint(path.read_bytes(), path=str(path))
    logger.info(f"Loaded {model} from {path}")
    return model, metadata
