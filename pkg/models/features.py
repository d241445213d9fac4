"""Feature data models: multi-stage backbone stacks and fused token matrices."""

from dataclasses import dataclass, field
from typing import List, Tuple

from core.tensor import Tensor
from utils.constants import ERROR_MESSAGES, NUM_STAGES
from utils.errors import ConfigMismatch, ShapeMismatch


@dataclass
class FeatureStack:
    """Per-stage backbone feature maps (C_s×H_s×W_s, stages 1-4) for one image."""

    stages: List[Tensor]
    image_id: str = ""
    class_id: int = 0

    def validate(self) -> None:
        """
        Check the stack invariants.

        Raises:
            ConfigMismatch: wrong number of stages
            ShapeMismatch: stage shapes do not halve spatially or channels shrink
        """
        if len(self.stages) != NUM_STAGES:
            raise ConfigMismatch(ERROR_MESSAGES["CONFIG_MISMATCH"].format(
                what="feature stages", expected=NUM_STAGES, actual=len(self.stages)))
        for stage in self.stages:
            if stage.ndim != 3:
                raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                    op="FeatureStack", left=stage.shape, right="C×H×W"))
        for low, high in zip(self.stages, self.stages[1:]):
            c_low, h_low, w_low = low.shape
            c_high, h_high, w_high = high.shape
            if h_low % 2 or w_low % 2 or (h_high, w_high) != (h_low // 2, w_low // 2) or c_high < c_low:
                raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                    op="FeatureStack", left=low.shape, right=high.shape))

    @property
    def channels(self) -> Tuple[int, ...]:
        return tuple(stage.shape[0] for stage in self.stages)

    @property
    def grid(self) -> Tuple[int, int]:
        """Spatial size of the deepest stage."""
        return self.stages[-1].shape[1], self.stages[-1].shape[2]


@dataclass
class FusedFeature:
    """Token matrix X (N×C) with its originating grid (H', W')."""

    tokens: Tensor
    grid: Tuple[int, int]
    channel_plan: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n, c = self.tokens.shape
        if n != self.grid[0] * self.grid[1]:
            raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                op="FusedFeature", left=self.tokens.shape, right=self.grid))
        if self.channel_plan and c != sum(self.channel_plan):
            raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                op="FusedFeature", left=self.tokens.shape, right=self.channel_plan))

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def num_channels(self) -> int:
        return self.tokens.shape[1]
