"""
Adam optimizer over a list of numpy parameter arrays, with global-norm
gradient clipping.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.utils.errors import DimensionError, NumericError

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], t=0)

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.m + self.v)


def global_norm(grads):
    """L2 norm over all gradient arrays."""
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_gradients(grads, max_norm):
    """
    Scale gradients so that their global L2 norm is at most max_norm.

    Args:
        grads (list of np.ndarray): Gradients
        max_norm (float or None): Threshold; None disables clipping

    Returns:
        tuple: (clipped gradients, norm before clipping)
    """
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


def adam_step(params, grads, state, lr, clip_norm=1.0, beta1=BETA1, beta2=BETA2,
              epsilon=EPSILON, epoch=None, batch=None):
    """
    One bias-corrected Adam update, in place.

    Args:
        params (list of np.ndarray): Parameters, updated in place
        grads (list of np.ndarray): Gradients, same shapes
        state (AdamState): Moments and step counter, updated in place
        lr (float): Learning rate
        clip_norm (float or None): Global gradient norm limit
        beta1 (float): First moment decay
        beta2 (float): Second moment decay
        epsilon (float): Denominator offset
        epoch (int, optional): For diagnostics
        batch (int, optional): For diagnostics

    Returns:
        tuple: (params, state)

    Raises:
        DimensionError: If shapes differ
        NumericError: If any gradient is NaN or infinite
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for index, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DimensionError(f"Parameter {index} has shape {p.shape} but gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Non-finite gradient for parameter {index}", epoch=epoch, batch=batch)
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]

    grads, norm = clip_gradients(grads, clip_norm)
    if clip_norm is not None and norm > clip_norm:
        logger.debug(f"Clipped gradient norm {norm:.4g} to {clip_norm}")

    state.t += 1
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t
    step_size = lr / bias1

    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= step_size * m / (np.sqrt(v / bias2) + epsilon)

    return params, state
