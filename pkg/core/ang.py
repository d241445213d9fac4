"""
Adaptive Noise Generator

Learns a per-token, per-channel weight W that scales Gaussian noise added to
the fused features during training:

    eps' = A * (W ⊙ eps),   X* = X + eps'
    L_ANG = -lambda_ang * L_e + lambda_re * ||W||_2

L_ANG updates W only. Noise is never applied at inference.
"""

import logging
from typing import Tuple

import numpy as np

from core.tensor import Tensor, elementwise, l2_norm
from models.params import NoiseParams
from utils.constants import ANG_INIT_WEIGHT, ERROR_MESSAGES
from utils.errors import ShapeMismatch

logger = logging.getLogger(__name__)


def init_noise_params(shape: Tuple[int, int], intensity: float, seed: int, dtype=np.float32) -> NoiseParams:
    """W filled with a small constant so training starts from near-zero noise."""
    weight = np.full(shape, ANG_INIT_WEIGHT, dtype=dtype)
    return NoiseParams(weight=Tensor.from_array(weight), intensity=intensity, seed=seed)


def noise_rng(seed: int, step: int, item: int) -> np.random.Generator:
    """Independent stream per (seed, step, batch item)."""
    return np.random.default_rng([seed, step, item])


def ang_sample(params: NoiseParams, x: Tensor, rng: np.random.Generator) -> Tuple[Tensor, Tensor]:
    """
    Add learned noise to ``x``.

    Args:
        params: current W and intensity A
        x: token matrix, same shape as W
        rng: generator the standard-normal eps is drawn from

    Returns:
        Tuple of (x_star, eps_prime)

    Raises:
        ShapeMismatch: ``x`` and W differ in shape
    """
    if x.shape != params.weight.shape:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
            op="ang_sample", left=x.shape, right=params.weight.shape))
    eps = Tensor.from_array(rng.standard_normal(x.shape).astype(x.dtype))
    eps_prime = elementwise("scale", elementwise("hadamard", params.weight, eps), params.intensity)
    return x + eps_prime, eps_prime


def ang_loss(l_e: Tensor, w: Tensor, lambda_ang: float, lambda_re: float) -> Tensor:
    """-lambda_ang * l_e + lambda_re * ||w||_2 as a scalar tensor."""
    return elementwise("scale", l_e, -lambda_ang) + elementwise("scale", l2_norm(w), lambda_re)
