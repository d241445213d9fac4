"""Dataset index and synthetic dataset specification models."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional

from utils.constants import SYNTH_ANOMALY_KINDS


@dataclass
class DatasetRecord:
    """One image (or pre-extracted feature file) in a dataset."""

    path: Path
    class_id: int
    split: Literal["train", "test"]
    label: Literal["normal", "anomalous"]
    mask_path: Optional[Path] = None

    @property
    def is_anomalous(self) -> bool:
        return self.label == "anomalous"

    @property
    def image_id(self) -> str:
        return f"{self.class_id}/{self.split}/{self.path.parent.name}/{self.path.stem}"


@dataclass
class DatasetIndex:
    """All records of a dataset plus the class-name table."""

    records: List[DatasetRecord]
    class_names: List[str]
    root: Optional[Path] = None

    def split(self, split: str, class_id: Optional[int] = None) -> List[DatasetRecord]:
        return [
            r for r in self.records
            if r.split == split and (class_id is None or r.class_id == class_id)
        ]

    @property
    def train(self) -> List[DatasetRecord]:
        return self.split("train")

    @property
    def test(self) -> List[DatasetRecord]:
        return self.split("test")

    def class_name(self, class_id: int) -> str:
        return self.class_names[class_id]

    def counts(self) -> Dict[str, int]:
        return {
            "train": len(self.train),
            "test": len(self.test),
            "anomalous": sum(1 for r in self.records if r.is_anomalous),
        }


@dataclass
class SyntheticSpec:
    """Recipe for the desk-scale multi-class dataset."""

    num_classes: int = 3
    image_size: int = 64
    seed: int = 0
    train_per_class: int = 20
    test_normal_per_class: int = 10
    test_anomalous_per_class: int = 10
    anomaly_kinds: List[str] = field(default_factory=lambda: list(SYNTH_ANOMALY_KINDS))

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        unknown = [k for k in self.anomaly_kinds if k not in SYNTH_ANOMALY_KINDS]
        if unknown or not self.anomaly_kinds:
            raise ValueError(f"anomaly kinds must be a non-empty subset of {SYNTH_ANOMALY_KINDS}")

    def class_seed(self, class_id: int) -> int:
        """Per-class pattern seed derived from the dataset seed."""
        return self.seed * 1000 + class_id
