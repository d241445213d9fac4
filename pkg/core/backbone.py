"""
Toy Backbone

Deterministic four-stage CNN used in place of a pretrained feature extractor.
Each stage is conv 3×3 / stride 2 / pad 1 with bias followed by a leaky ramp
(slope 0.1). Weights are drawn once from the seed and never trained.
"""

import logging
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from core.tensor import Tensor, conv2d, leaky_relu
from models.features import FeatureStack
from utils.constants import BACKBONE_CHANNELS, BACKBONE_DIVISOR, BACKBONE_LEAK, ERROR_MESSAGES
from utils.errors import BadDims

logger = logging.getLogger(__name__)

_DTYPE = np.float32


@lru_cache(maxsize=8)
def backbone_weights(seed: int, in_channels: int = 3) -> Tuple[Tuple[np.ndarray, np.ndarray], ...]:
    """Frozen (kernel, bias) pairs for the four stages, He-scaled from ``seed``."""
    rng = np.random.default_rng(seed)
    weights: List[Tuple[np.ndarray, np.ndarray]] = []
    c_in = in_channels
    for c_out in BACKBONE_CHANNELS:
        fan_in = c_in * 9
        kernel = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, 3, 3)).astype(_DTYPE)
        bias = rng.uniform(-0.1, 0.1, size=(c_out,)).astype(_DTYPE)
        kernel.setflags(write=False)
        bias.setflags(write=False)
        weights.append((kernel, bias))
        c_in = c_out
    logger.debug("Toy backbone weights drawn for seed %d", seed)
    return tuple(weights)


def toy_backbone_extract(image: Tensor, seed: int, image_id: str = "", class_id: int = 0) -> FeatureStack:
    """
    Extract a 4-stage FeatureStack from a 3×H×W image.

    Args:
        image: input image, H and W divisible by 16
        seed: backbone weight seed

    Returns:
        FeatureStack with channels (16, 32, 64, 128) at /2, /4, /8, /16 resolution

    Raises:
        BadDims: H or W not divisible by 16
    """
    _, height, width = image.shape
    if height % BACKBONE_DIVISOR or width % BACKBONE_DIVISOR:
        raise BadDims(ERROR_MESSAGES["BAD_DIMS"].format(h=height, w=width, divisor=BACKBONE_DIVISOR))

    x = Tensor(image.data, dtype=_DTYPE)
    stages: List[Tensor] = []
    for kernel, bias in backbone_weights(seed, image.shape[0]):
        x = conv2d(x, Tensor.from_array(kernel), Tensor.from_array(bias), stride=2, dilation=1, padding=1)
        x = leaky_relu(x, BACKBONE_LEAK)
        stages.append(x)
    return FeatureStack(stages=stages, image_id=image_id, class_id=class_id)
