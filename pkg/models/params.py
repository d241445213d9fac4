"""Trainable parameter sets for FFM, ANG and the mixed-attention auto encoder."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.tensor import Tensor


class ParamGroup(ABC):
    """Base for dataclasses that expose their tensors under stable dotted names."""

    @abstractmethod
    def named(self) -> Dict[str, Tensor]:
        """Every tensor of the group, keyed by its dotted name."""

    @abstractmethod
    def with_tensors(self, tensors: Dict[str, Tensor]) -> "ParamGroup":
        """Copy of the group with tensors replaced by name."""

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named().items()}

    def with_arrays(self, arrays: Dict[str, np.ndarray], requires_grad: bool = False) -> "ParamGroup":
        return self.with_tensors({
            name: Tensor.from_array(np.asarray(arr), requires_grad) for name, arr in arrays.items()
        })

    def leaves(self, requires_grad: bool = True) -> "ParamGroup":
        """Fresh leaf tensors over the same (read-only) buffers."""
        return self.with_arrays(self.arrays(), requires_grad)

    def grads(self) -> Dict[str, np.ndarray]:
        """Gradients after backward; parameters the loss never reached get zeros."""
        return {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in self.named().items()
        }

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.named().values())


def _prefixed(prefix: str, tensors: Dict[str, Tensor]) -> Dict[str, Tensor]:
    return {f"{prefix}.{name}": t for name, t in tensors.items()}


def _strip(prefix: str, tensors: Dict[str, Tensor]) -> Dict[str, Tensor]:
    head = prefix + "."
    return {name[len(head):]: t for name, t in tensors.items() if name.startswith(head)}


@dataclass
class SaParams(ParamGroup):
    """Single-head self-attention projections (all k×k for token width k)."""

    query: Tensor
    key: Tensor
    value: Tensor
    output: Tensor

    @property
    def width(self) -> int:
        return self.query.shape[0]

    def named(self) -> Dict[str, Tensor]:
        return {"query": self.query, "key": self.key, "value": self.value, "output": self.output}

    def with_tensors(self, tensors: Dict[str, Tensor]) -> "SaParams":
        return SaParams(**tensors)


@dataclass
class BlockParams(ParamGroup):
    """One mixed block: spatial SA, optional channel SA, dilated conv."""

    spatial: SaParams
    channel: Optional[SaParams]
    dc_kernel: Tensor
    dc_bias: Tensor

    def named(self) -> Dict[str, Tensor]:
        tensors = _prefixed("spatial", self.spatial.named())
        if self.channel is not None:
            tensors.update(_prefixed("channel", self.channel.named()))
        tensors["dc_kernel"] = self.dc_kernel
        tensors["dc_bias"] = self.dc_bias
        return tensors

    def with_tensors(self, tensors: Dict[str, Tensor]) -> "BlockParams":
        channel = None
        if self.channel is not None:
            channel = self.channel.with_tensors(_strip("channel", tensors))
        return BlockParams(
            spatial=self.spatial.with_tensors(_strip("spatial", tensors)),
            channel=channel,
            dc_kernel=tensors["dc_kernel"],
            dc_bias=tensors["dc_bias"],
        )


@dataclass
class MaaeParams(ParamGroup):
    """Stack of mixed blocks with a residual skip after every ``residual_period`` blocks."""

    blocks: List[BlockParams]
    residual_period: int = 3
    dilation: int = 4
    grid: Tuple[int, int] = (4, 4)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def named(self) -> Dict[str, Tensor]:
        tensors: Dict[str, Tensor] = {}
        for index, block in enumerate(self.blocks):
            tensors.update(_prefixed(f"blocks.{index}", block.named()))
        return tensors

    def with_tensors(self, tensors: Dict[str, Tensor]) -> "MaaeParams":
        blocks = [
            block.with_tensors(_strip(f"blocks.{index}", tensors))
            for index, block in enumerate(self.blocks)
        ]
        return replace(self, blocks=blocks)


@dataclass
class FfmParams(ParamGroup):
    """Three stride-2 downsampling convs (channel preserving) and one dilated conv."""

    down_kernels: List[Tensor]
    down_biases: List[Tensor]
    dc_kernel: Tensor
    dc_bias: Tensor
    dilation: int = 4

    def named(self) -> Dict[str, Tensor]:
        tensors: Dict[str, Tensor] = {}
        for index, (kernel, bias) in enumerate(zip(self.down_kernels, self.down_biases)):
            tensors[f"down.{index}.kernel"] = kernel
            tensors[f"down.{index}.bias"] = bias
        tensors["dc_kernel"] = self.dc_kernel
        tensors["dc_bias"] = self.dc_bias
        return tensors

    def with_tensors(self, tensors: Dict[str, Tensor]) -> "FfmParams":
        steps = range(len(self.down_kernels))
        return replace(
            self,
            down_kernels=[tensors[f"down.{i}.kernel"] for i in steps],
            down_biases=[tensors[f"down.{i}.bias"] for i in steps],
            dc_kernel=tensors["dc_kernel"],
            dc_bias=tensors["dc_bias"],
        )


@dataclass
class NoiseParams(ParamGroup):
    """ANG state: learnable N×C weight W, intensity A and the noise seed."""

    weight: Tensor
    intensity: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError(f"noise intensity must be >= 0, got {self.intensity}")

    def named(self) -> Dict[str, Tensor]:
        return {"weight": self.weight}

    def with_tensors(self, tensors: Dict[str, Tensor]) -> "NoiseParams":
        return replace(self, weight=tensors["weight"])


@dataclass
class AdamState:
    """Adam moments per named parameter plus the shared timestep."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
