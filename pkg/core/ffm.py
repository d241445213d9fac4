"""
Feature Fusion

Fuses the four backbone stages into one token matrix. Each step downsamples the
running low-level map with a 3×3 stride-2 conv (channel preserving) and
concatenates the next stage; a dilated conv then mixes distant positions before
reconstruction. ``bilinear_fuse`` is the interpolation-only baseline, and
``standardize_tokens`` puts either result on a unit scale before noise is added.
"""

import logging
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.tensor import Tensor, concat_channels, conv2d, reshape, resize_bilinear, transpose2d
from models.features import FeatureStack, FusedFeature
from models.params import FfmParams
from utils.constants import ERROR_MESSAGES, INIT_PERTURBATION, INIT_SCHEMES
from utils.errors import ShapeMismatch

logger = logging.getLogger(__name__)


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def centre_tap_init(rng: np.random.Generator, channels: int, dtype, scale: float = 1.0) -> np.ndarray:
    """
    C×C×3×3 kernel whose centre tap is ``scale``·I plus a small uniform perturbation.

    With ``scale`` 0 the kernel is exactly zero.
    """
    kernel = np.zeros((channels, channels, 3, 3), dtype=np.float64)
    if scale:
        kernel[np.arange(channels), np.arange(channels), 1, 1] = scale
        kernel += INIT_PERTURBATION * uniform_init(rng, kernel.shape, channels * 9, np.float64)
    return kernel.astype(dtype)


def check_init_scheme(scheme: str) -> None:
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"init scheme must be one of {INIT_SCHEMES}, got {scheme!r}")


def init_ffm_params(
    channels: Sequence[int],
    dilation: int,
    rng: np.random.Generator,
    dtype=np.float32,
    scheme: str = "identity",
) -> FfmParams:
    """
    Draw FFM parameters for a stack with the given per-stage channel counts.

    Step i maps the running C_low = C_1 + ... + C_(i+1) onto itself. The
    ``identity`` scheme starts every conv near a centre-tap identity with zero
    bias; ``uniform`` draws everything from U(±1/sqrt(fan_in)).
    """
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    check_init_scheme(scheme)

    def kernel(c: int) -> Tensor:
        if scheme == "uniform":
            return Tensor.from_array(uniform_init(rng, (c, c, 3, 3), c * 9, dtype))
        return Tensor.from_array(centre_tap_init(rng, c, dtype))

    def bias(c: int) -> Tensor:
        if scheme == "uniform":
            return Tensor.from_array(uniform_init(rng, (c,), c * 9, dtype))
        return Tensor.from_array(np.zeros(c, dtype=dtype))

    kernels: List[Tensor] = []
    biases: List[Tensor] = []
    c_low = channels[0]
    for c_next in channels[1:]:
        kernels.append(kernel(c_low))
        biases.append(bias(c_low))
        c_low += c_next

    return FfmParams(
        down_kernels=kernels,
        down_biases=biases,
        dc_kernel=kernel(c_low),
        dc_bias=bias(c_low),
        dilation=dilation,
    )


def ffm_downsample_step(low: Tensor, high: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Downsample ``low`` by a 3×3 stride-2 pad-1 conv and stack ``high`` behind it.

    Raises:
        ShapeMismatch: ``high`` is not exactly half of ``low`` spatially
    """
    _, h_low, w_low = low.shape
    if h_low % 2 or w_low % 2 or high.shape[1:] != (h_low // 2, w_low // 2):
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
            op="ffm_downsample_step", left=low.shape, right=high.shape))
    return concat_channels(conv2d(low, kernel, bias, stride=2, dilation=1, padding=1), high)


def tokens_from_grid(x: Tensor) -> Tensor:
    """C×H×W → N×C with tokens in row-major grid order."""
    c, h, w = x.shape
    return transpose2d(reshape(x, (c, h * w)))


def grid_from_tokens(tokens: Tensor, grid: Tuple[int, int]) -> Tensor:
    """N×C → C×H×W; exact inverse of ``tokens_from_grid``."""
    n, c = tokens.shape
    if n != grid[0] * grid[1]:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
            op="grid_from_tokens", left=tokens.shape, right=grid))
    return reshape(transpose2d(tokens), (c, grid[0], grid[1]))


def ffm_fuse(stack: FeatureStack, params: FfmParams) -> FusedFeature:
    """
    Fuse a 4-stage stack: three downsample-concat steps, then the dilated conv.

    Returns:
        FusedFeature on the stage-4 grid with C = C1 + C2 + C3 + C4
    """
    stack.validate()
    fused = stack.stages[0]
    for high, kernel, bias in zip(stack.stages[1:], params.down_kernels, params.down_biases):
        fused = ffm_downsample_step(fused, high, kernel, bias)
    d = params.dilation
    fused = conv2d(fused, params.dc_kernel, params.dc_bias, stride=1, dilation=d, padding=d)
    return FusedFeature(tokens=tokens_from_grid(fused), grid=stack.grid, channel_plan=stack.channels)


def bilinear_fuse(stack: FeatureStack) -> FusedFeature:
    """Resize every stage to the stage-4 grid (half-pixel bilinear) and concatenate channels."""
    stack.validate()
    grid = stack.grid
    fused = None
    for stage in stack.stages:
        resized = stage if stage.shape[1:] == grid else resize_bilinear(stage, grid, align_corners=False)
        fused = resized if fused is None else concat_channels(fused, resized)
    return FusedFeature(tokens=tokens_from_grid(fused), grid=grid, channel_plan=stack.channels)


def standardize_tokens(fused: FusedFeature) -> FusedFeature:
    """
    Shift and scale the token matrix to zero mean and unit variance over all entries.

    The mean and standard deviation are taken from the values and enter the tape
    as constants, so gradients flow through the tokens only. A constant matrix
    is only centred.
    """
    data = fused.tokens.data
    mean = float(data.mean())
    std = float(data.std())
    tokens = fused.tokens - mean
    if std > 0:
        tokens = tokens * (1.0 / std)
    return replace(fused, tokens=tokens)
