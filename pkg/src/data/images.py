"""
Image and volume containers and their file formats.

2D images use binary netpbm: P5 (grayscale PGM) and P6 (RGB PPM) with
maxval up to 65535 (two big-endian bytes per sample above 255). 3D volumes
use the raw STV1 format: magic b"STV1", four little-endian u32 extents
D, H, W, C, then D*H*W*C little-endian float32 samples in row-major order.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.utils.errors import DataError, DimensionError, ParseError

logger = logging.getLogger(__name__)

VOLUME_MAGIC = b"STV1"
_VOLUME_HEADER = struct.Struct("<4sIIII")
_WHITESPACE = b" \t\n\r\v\f"


@dataclass
class Image:
    """
    Dense image with intensities in [0, 1].

    Args:
        data (np.ndarray): (H, W, C) for 2D or (D, H, W, C) for 3D, float64
        bit_depth (int): Bit depth of the source file (8, 16 or 32 for STV1)
    """

    data: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim not in (3, 4):
            raise DimensionError(
                f"Image data must be (H, W, C) or (D, H, W, C), got shape {self.data.shape}"
            )
        if any(extent < 1 for extent in self.data.shape):
            raise DimensionError(f"Image extents must be >= 1, got {self.data.shape}")

    @property
    def dims(self):
        return self.data.ndim - 1

    @property
    def spatial_shape(self):
        return self.data.shape[:-1]

    @property
    def channels(self):
        return self.data.shape[-1]


@dataclass
class Sample:
    """
    An image paired with its binary mask.

    Args:
        image (Image): Input image
        mask (np.ndarray): uint8 array of the image's spatial shape, values {0, 1}
        id (str): Sample identifier (file stem)
    """

    image: Image
    mask: np.ndarray
    id: str

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if self.mask.shape != tuple(self.image.spatial_shape):
            raise DimensionError(
                f"Mask shape {self.mask.shape} does not match image {self.image.spatial_shape} "
                f"for sample '{self.id}'"
            )
        if np.any(self.mask > 1):
            raise DataError(f"Mask of sample '{self.id}' has values outside {{0, 1}}")


def normalize_image(image):
    """
    Per-image min-max normalization to [0, 1].

    Constant images map to all zeros.

    Args:
        image (Image): Input image

    Returns:
        Image: Normalized copy
    """
    data = image.data
    low, high = float(np.min(data)), float(np.max(data))
    if high > low:
        data = (data - low) / (high - low)
    else:
        data = np.zeros_like(data)
    return Image(data=data, bit_depth=image.bit_depth)


# Netpbm

def _read_token(raw, pos, path):
    """Read one whitespace-delimited header token, skipping comments."""
    size = len(raw)
    while pos < size:
        byte = raw[pos:pos + 1]
        if byte == b"#":
            end = raw.find(b"\n", pos)
            pos = size if end < 0 else end + 1
        elif byte in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < size and raw[pos:pos + 1] not in _WHITESPACE and raw[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("Unexpected end of header", offset=start, path=path)
    return raw[start:pos], pos


def _read_int(raw, pos, path, name):
    token, end = _read_token(raw, pos, path)
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"Invalid {name} {token!r} in header", offset=end - len(token), path=path)
    if value < 1:
        raise ParseError(f"{name} must be positive, got {value}", offset=end - len(token), path=path)
    return value, end


def parse_pnm(raw, path=None):
    """
    Parse binary PGM/PPM bytes.

    Args:
        raw (bytes): File contents
        path (str, optional): Name used in error messages

    Returns:
        tuple: (samples as uint16 array (H, W, C), maxval)

    Raises:
        ParseError: On malformed header or short payload
    """
    magic = raw[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ParseError(f"Unsupported netpbm magic {magic!r}; expected P5 or P6", offset=0, path=path)

    width, pos = _read_int(raw, 2, path, "width")
    height, pos = _read_int(raw, pos, path, "height")
    maxval, pos = _read_int(raw, pos, path, "maxval")
    if maxval > 65535:
        raise ParseError(f"maxval {maxval} exceeds 65535", offset=pos, path=path)
    if pos >= len(raw) or raw[pos:pos + 1] not in _WHITESPACE:
        raise ParseError("Missing whitespace after maxval", offset=pos, path=path)
    pos += 1

    sample_bytes = 1 if maxval < 256 else 2
    expected = width * height * channels * sample_bytes
    payload = raw[pos:pos + expected]
    if len(payload) < expected:
        raise ParseError(
            f"Truncated payload: expected {expected} bytes, found {len(payload)}",
            offset=pos + len(payload), path=path,
        )
    dtype = np.uint8 if sample_bytes == 1 else np.dtype(">u2")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.uint16)
    samples = samples.reshape(height, width, channels)
    if np.any(samples > maxval):
        raise ParseError(f"Sample values exceed maxval {maxval}", offset=pos, path=path)
    return samples, maxval


def load_pnm(path):
    """
    Load a binary PGM (P5) or PPM (P6) file.

    Args:
        path (str or Path): File path

    Returns:
        Image: Values divided by maxval; C = 1 for P5, 3 for P6
    """
    path = Path(path)
    samples, maxval = parse_pnm(path.read_bytes(), path=str(path))
    bit_depth = 8 if maxval < 256 else 16
    return Image(data=samples.astype(np.float64) / maxval, bit_depth=bit_depth)


def save_pnm(path, samples, maxval=255):
    """
    Write integer samples as binary PGM/PPM.

    Args:
        path (str or Path): Output path
        samples (np.ndarray): Integers in [0, maxval], shape (H, W), (H, W, 1)
            or (H, W, 3)
        maxval (int): 255 or up to 65535

    Raises:
        DimensionError: For unsupported shapes
        DataError: For out-of-range samples
    """
    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples[..., np.newaxis]
    if samples.ndim != 3 or samples.shape[2] not in (1, 3):
        raise DimensionError(f"Cannot write shape {samples.shape} as PGM/PPM")
    if np.any(samples < 0) or np.any(samples > maxval):
        raise DataError(f"Samples outside [0, {maxval}] cannot be written")

    height, width, channels = samples.shape
    magic = b"P5" if channels == 1 else b"P6"
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    header = magic + f"\n{width} {height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(samples, dtype=dtype).tobytes())


def save_image(path, image):
    """Write a 2D Image as 8-bit PGM/PPM (round(255 * v))."""
    data = np.clip(image.data, 0.0, 1.0)
    save_pnm(path, np.rint(255.0 * data).astype(np.uint16), maxval=255)


def save_mask(path, mask):
    """Write a binary mask as a {0, 255} PGM."""
    save_pnm(path, (np.asarray(mask) > 0).astype(np.uint16) * 255, maxval=255)


def save_soft(path, probabilities):
    """Write probabilities as a 16-bit PGM (round(65535 * s))."""
    probabilities = np.clip(np.asarray(probabilities, dtype=np.float64), 0.0, 1.0)
    save_pnm(path, np.rint(65535.0 * probabilities).astype(np.uint16), maxval=65535)


def load_mask(path):
    """
    Load a mask file; any nonzero sample is foreground.

    Args:
        path (str or Path): .pgm or .stv file

    Returns:
        np.ndarray: uint8 mask of spatial shape, values {0, 1}
    """
    path = Path(path)
    if path.suffix.lower() == ".stv":
        volume = load_volume(path)
        return (volume.data[..., 0] > 0).astype(np.uint8)
    samples, _ = parse_pnm(path.read_bytes(), path=str(path))
    return (samples[..., 0] > 0).astype(np.uint8)


# STV1 volumes

def load_volume(path):
    """
    Load an STV1 raw volume.

    Args:
        path (str or Path): File path

    Returns:
        Image: 3D image (D, H, W, C)

    Raises:
        ParseError: On bad magic, zero extents or payload size mismatch
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _VOLUME_HEADER.size:
        raise ParseError("File shorter than STV1 header", offset=len(raw), path=str(path))
    magic, depth, height, width, channels = _VOLUME_HEADER.unpack_from(raw, 0)
    if magic != VOLUME_MAGIC:
        raise ParseError(f"Bad volume magic {magic!r}; expected {VOLUME_MAGIC!r}", offset=0, path=str(path))
    if min(depth, height, width, channels) < 1:
        raise ParseError(
            f"Volume extents must be >= 1, got {(depth, height, width, channels)}",
            offset=4, path=str(path),
        )
    expected = depth * height * width * channels * 4
    payload = raw[_VOLUME_HEADER.size:]
    if len(payload) != expected:
        raise ParseError(
            f"Payload has {len(payload)} bytes but extents {(depth, height, width, channels)} "
            f"need {expected}",
            offset=_VOLUME_HEADER.size + min(len(payload), expected), path=str(path),
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return Image(data=data.reshape(depth, height, width, channels), bit_depth=32)


def save_volume(path, volume):
    """
    Write a volume in STV1 format.

    Args:
        path (str or Path): Output path
        volume (Image or np.ndarray): (D, H, W, C) or (D, H, W) data
    """
    data = np.asarray(getattr(volume, "data", volume))
    if data.ndim == 3:
        data = data[..., np.newaxis]
    if data.ndim != 4:
        raise DimensionError(f"Cannot write shape {data.shape} as STV1 volume")
    header = _VOLUME_HEADER.pack(VOLUME_MAGIC, *data.shape)
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_image(path):
    """Load a .pgm/.ppm image or .stv volume by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return load_pnm(path)
    if suffix == ".stv":
        return load_volume(path)
    raise DataError(f"Unsupported image format '{suffix}' for {path}")
