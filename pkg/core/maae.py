"""
Mixed-Attention Auto Encoder

Each block computes Y = DC(SA(X) + SA(Xᵀ)ᵀ): spatial self-attention over the
N tokens, channel self-attention over the transposed C×N matrix, then a 3×3
dilated conv on the token grid. A residual skip is added after every M blocks
and after a shorter trailing group when M does not divide the block count.
"""

import logging
import math
from typing import List, Optional, Tuple, Union

import numpy as np

from core.ffm import centre_tap_init, check_init_scheme, grid_from_tokens, tokens_from_grid, uniform_init
from core.tensor import Tensor, conv2d, matmul, mse, softmax_rows, transpose2d
from models.params import BlockParams, MaaeParams, SaParams
from utils.constants import ERROR_MESSAGES
from utils.errors import ConfigMismatch, ShapeMismatch

logger = logging.getLogger(__name__)


def init_sa_params(width: int, rng: np.random.Generator, dtype=np.float32) -> SaParams:
    def draw() -> Tensor:
        return Tensor.from_array(uniform_init(rng, (width, width), width, dtype))

    return SaParams(query=draw(), key=draw(), value=draw(), output=draw())


def init_maae_params(
    num_tokens: int,
    channels: int,
    grid: Tuple[int, int],
    num_blocks: int,
    residual_period: int,
    dilation: int,
    mixed: bool,
    rng: np.random.Generator,
    dtype=np.float32,
    scheme: str = "identity",
) -> MaaeParams:
    """
    Draw a block stack for N×C tokens on ``grid``.

    With ``mixed`` false the channel branch is omitted and blocks reduce to DC(SA(X)).
    The ``identity`` scheme zeroes the DC of the block that closes each residual
    group and starts the other DCs near a centre-tap identity, so the stack begins
    as an exact pass-through; ``uniform`` draws every parameter from U(±1/sqrt(fan_in)).
    """
    if num_tokens != grid[0] * grid[1]:
        raise ConfigMismatch(ERROR_MESSAGES["CONFIG_MISMATCH"].format(
            what="token count", expected=grid[0] * grid[1], actual=num_tokens))
    if residual_period < 1 or dilation < 1:
        raise ValueError(f"residual period and dilation must be >= 1, got {residual_period}, {dilation}")
    check_init_scheme(scheme)
    if num_blocks % residual_period:
        logger.warning(f"num_blocks={num_blocks} is not a multiple of M={residual_period}; "
                       f"the last {num_blocks % residual_period} blocks form a shorter residual group")

    blocks: List[BlockParams] = []
    for index in range(1, num_blocks + 1):
        spatial = init_sa_params(channels, rng, dtype)
        channel = init_sa_params(num_tokens, rng, dtype) if mixed else None
        if scheme == "uniform":
            fan_in = channels * 9
            kernel = uniform_init(rng, (channels, channels, 3, 3), fan_in, dtype)
            bias = uniform_init(rng, (channels,), fan_in, dtype)
        else:
            closes_group = index % residual_period == 0 or index == num_blocks
            kernel = centre_tap_init(rng, channels, dtype, scale=0.0 if closes_group else 1.0)
            bias = np.zeros(channels, dtype=dtype)
        blocks.append(BlockParams(
            spatial=spatial,
            channel=channel,
            dc_kernel=Tensor.from_array(kernel),
            dc_bias=Tensor.from_array(bias),
        ))
    return MaaeParams(blocks=blocks, residual_period=residual_period, dilation=dilation, grid=tuple(grid))


def sa(x: Tensor, p: SaParams, return_attention: bool = False) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """
    Single-head scaled dot-product self-attention over the rows of ``x`` (m×k).

    Returns:
        softmax((xQ)(xK)ᵀ/√k)(xV)O, plus the m×m attention matrix when requested
    """
    m, k = x.shape
    if k != p.width:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="sa", left=x.shape, right=p.query.shape))
    q = matmul(x, p.query)
    keys = matmul(x, p.key)
    v = matmul(x, p.value)
    scores = matmul(q, transpose2d(keys)) / math.sqrt(k)
    attention = softmax_rows(scores)
    out = matmul(matmul(attention, v), p.output)
    if return_attention:
        return out, attention
    return out


def mixed_block(x: Tensor, block: BlockParams, grid: Tuple[int, int], dilation: int) -> Tensor:
    """One block: DC(SA(X) + SA(Xᵀ)ᵀ), or DC(SA(X)) when the block has no channel branch."""
    if x.shape[0] != grid[0] * grid[1]:
        raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(op="mixed_block", left=x.shape, right=grid))
    y = sa(x, block.spatial)
    if block.channel is not None:
        y = y + transpose2d(sa(transpose2d(x), block.channel))
    out = conv2d(grid_from_tokens(y, grid), block.dc_kernel, block.dc_bias, stride=1, dilation=dilation, padding=dilation)
    return tokens_from_grid(out)


def maae_forward(x_star: Tensor, params: MaaeParams) -> Tensor:
    """
    Run the block stack; after every M-th block, and after the last block, the
    value that entered the group is added back.

    Raises:
        ConfigMismatch: token shape disagrees with the parameters
    """
    if not params.blocks:
        return x_star
    n, c = x_star.shape
    grid = params.grid
    first = params.blocks[0]
    expected_n = grid[0] * grid[1]
    if n != expected_n or c != first.spatial.width or (first.channel is not None and first.channel.width != n):
        raise ConfigMismatch(ERROR_MESSAGES["CONFIG_MISMATCH"].format(
            what="token matrix", expected=(expected_n, first.spatial.width), actual=x_star.shape))

    h = x_star
    group_input = x_star
    for index, block in enumerate(params.blocks, start=1):
        h = mixed_block(h, block, grid, params.dilation)
        if index % params.residual_period == 0:
            h = h + group_input
            group_input = h
    if len(params.blocks) % params.residual_period:
        h = h + group_input
    return h


def recon_loss(y: Tensor, target: Tensor, n: int) -> Tensor:
    """L_e = ||Y - target||² / N."""
    return mse(y, target, n)


def attention_maps(x: Tensor, block: BlockParams) -> Tuple[Tensor, Optional[Tensor]]:
    """Spatial (N×N) and channel (C×C) attention matrices of one block."""
    _, spatial = sa(x, block.spatial, return_attention=True)
    channel = None
    if block.channel is not None:
        _, channel = sa(transpose2d(x), block.channel, return_attention=True)
    return spatial, channel
