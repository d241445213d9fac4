"""Training state data model."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from models.params import AdamState, FfmParams, MaaeParams, NoiseParams


@dataclass
class LossRecord:
    """One row of the loss log."""

    step: int
    recon_loss: float
    ang_loss: float
    noise_norm: float

    def to_csv_row(self) -> str:
        return f"{self.step},{self.recon_loss!r},{self.ang_loss!r},{self.noise_norm!r}"


@dataclass
class TrainState:
    """Everything that evolves during training."""

    model: MaaeParams
    ffm: Optional[FfmParams]
    noise: NoiseParams
    model_opt: AdamState = field(default_factory=AdamState)
    noise_opt: AdamState = field(default_factory=AdamState)
    step: int = 0
    history: List[LossRecord] = field(default_factory=list)


@dataclass
class TrainResult:
    """Files produced by one training unit (the unified model or one class)."""

    unit: str
    checkpoint: Path
    loss_log: Path
    state: TrainState
