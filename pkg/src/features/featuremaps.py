"""
Local feature maps that lift a pixel intensity in [0, 1] to a d-vector.

Three fixed (non-learned) families are supported:

- binomial-sinusoidal: sqrt(C(d-1, k)) cos(pi x / 2)^(d-1-k) sin(pi x / 2)^k,
  k = 0..d-1. Unit norm for every x.
- linear-complement: [x, 1 - x]. Only d = 2.
- fourier: [sin(2^i pi x), cos(2^i pi x)] for i = 1..d/2. d must be even.

Multi-channel pixels are mapped channel by channel and concatenated
channel-major (channel 0's d entries first).
"""
import logging
from dataclasses import dataclass
from math import comb

import numpy as np

from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

BINOMIAL_SINUSOIDAL = "binomial-sinusoidal"
LINEAR_COMPLEMENT = "linear-complement"
FOURIER = "fourier"
KINDS = (BINOMIAL_SINUSOIDAL, LINEAR_COMPLEMENT, FOURIER)

DEFAULT_KIND = BINOMIAL_SINUSOIDAL
DEFAULT_DIM = 4

_clamp_warned = False


def _clamp(x):
    """Clamp intensities to [0, 1], warning once per process."""
    global _clamp_warned
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0):
        if not _clamp_warned:
            logger.warning(
                f"Pixel intensities outside [0, 1] (min {np.min(x):.4g}, "
                f"max {np.max(x):.4g}); clamping"
            )
            _clamp_warned = True
        x = np.clip(x, 0.0, 1.0)
    return x


def _power(base, exponent):
    """base ** exponent with 0 where exponent < 0."""
    if exponent < 0:
        return np.zeros_like(base)
    return base ** exponent


@dataclass(frozen=True)
class LocalFeatureMap:
    """
    A local feature map psi: [0, 1] -> R^d.

    Args:
        kind (str): One of KINDS
        d (int): Local dimension
    """

    kind: str = DEFAULT_KIND
    d: int = DEFAULT_DIM

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"Unknown feature_map.kind '{self.kind}'; expected one of {', '.join(KINDS)}"
            )
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise ConfigurationError(f"feature_map.d must be an integer >= 2, got {self.d}")
        if self.kind == LINEAR_COMPLEMENT and self.d != 2:
            raise ConfigurationError(f"feature_map.d must be 2 for {LINEAR_COMPLEMENT}, got {self.d}")
        if self.kind == FOURIER and self.d % 2 != 0:
            raise ConfigurationError(f"feature_map.d must be even for {FOURIER}, got {self.d}")

    @classmethod
    def from_dict(cls, params):
        """Build from a {'kind': ..., 'd': ...} config block."""
        params = params or {}
        return cls(kind=params.get("kind", DEFAULT_KIND), d=int(params.get("d", DEFAULT_DIM)))

    def to_dict(self):
        return {"kind": self.kind, "d": int(self.d)}

    def apply(self, x):
        """
        Map intensities to feature vectors.

        Args:
            x (float or np.ndarray): Intensities, any shape; values outside
                [0, 1] are clamped

        Returns:
            np.ndarray: Shape x.shape + (d,)
        """
        x = _clamp(x)
        if self.kind == BINOMIAL_SINUSOIDAL:
            c = np.cos(0.5 * np.pi * x)
            s = np.sin(0.5 * np.pi * x)
            n = self.d - 1
            parts = [np.sqrt(comb(n, k)) * c ** (n - k) * s ** k for k in range(self.d)]
        elif self.kind == LINEAR_COMPLEMENT:
            parts = [x, 1.0 - x]
        else:
            parts = []
            for i in range(1, self.d // 2 + 1):
                freq = (2.0 ** i) * np.pi
                parts.extend([np.sin(freq * x), np.cos(freq * x)])
        return np.stack(parts, axis=-1)

    def derivative(self, x):
        """
        Analytic d psi / dx.

        Args:
            x (float or np.ndarray): Intensities in [0, 1]

        Returns:
            np.ndarray: Shape x.shape + (d,)
        """
        x = _clamp(x)
        if self.kind == BINOMIAL_SINUSOIDAL:
            half_pi = 0.5 * np.pi
            c = np.cos(half_pi * x)
            s = np.sin(half_pi * x)
            n = self.d - 1
            parts = []
            for k in range(self.d):
                a = n - k
                # d/dx c^a s^k = (pi/2) (-a c^(a-1) s^(k+1) + k c^(a+1) s^(k-1))
                term = -a * _power(c, a - 1) * s ** (k + 1) + k * c ** (a + 1) * _power(s, k - 1)
                parts.append(np.sqrt(comb(n, k)) * half_pi * term)
        elif self.kind == LINEAR_COMPLEMENT:
            parts = [np.ones_like(x), -np.ones_like(x)]
        else:
            parts = []
            for i in range(1, self.d // 2 + 1):
                freq = (2.0 ** i) * np.pi
                parts.extend([freq * np.cos(freq * x), -freq * np.sin(freq * x)])
        return np.stack(parts, axis=-1)

    def apply_channels(self, pixels):
        """
        Map multi-channel pixels, concatenating channel-major.

        Args:
            pixels (np.ndarray): Shape (..., C)

        Returns:
            np.ndarray: Shape (..., C * d)
        """
        pixels = np.asarray(pixels, dtype=np.float64)
        mapped = self.apply(pixels)
        return mapped.reshape(pixels.shape[:-1] + (pixels.shape[-1] * self.d,))

    def identity_weights(self, samples=1001):
        """
        Least-squares weights w with sum_i w_i psi_i(x) ~= 1 on [0, 1].

        Used to build site tensors whose contraction is close to the identity
        for any intensity. Exact for linear-complement and odd-d
        binomial-sinusoidal maps; approximate otherwise.

        Args:
            samples (int): Grid points on [0, 1]

        Returns:
            np.ndarray: Weights [d]
        """
        grid = np.linspace(0.0, 1.0, samples)
        basis = self.apply(grid)
        weights, _, _, _ = np.linalg.lstsq(basis, np.ones(samples), rcond=None)
        residual = np.max(np.abs(basis @ weights - 1.0))
        if residual > 0.1:
            logger.warning(
                f"{self.kind} (d={self.d}) cannot represent a constant well "
                f"(max residual {residual:.3f}); long chains may be poorly conditioned"
            )
        return weights


def apply(feature_map, x):
    """Module-level alias of LocalFeatureMap.apply."""
    return feature_map.apply(x)


def apply_channels(feature_map, pixel):
    """Module-level alias of LocalFeatureMap.apply_channels."""
    return feature_map.apply_channels(pixel)


def derivative(feature_map, x):
    """Module-level alias of LocalFeatureMap.derivative."""
    return feature_map.derivative(x)
