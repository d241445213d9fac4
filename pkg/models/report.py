"""Anomaly map and evaluation report data models."""

from dataclasses import dataclass, field
from statistics import fmean
from typing import List, Optional, Tuple

import numpy as np


@dataclass
class AnomalyMap:
    """Per-pixel anomaly scores (H×W, nonnegative) for one image."""

    values: np.ndarray
    image_id: str = ""


@dataclass
class ClassResult:
    """AUROC row for one class."""

    class_name: str
    image_auroc: float
    pixel_auroc: Optional[float] = None
    num_normal: int = 0
    num_anomalous: int = 0

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "image_auroc": self.image_auroc,
            "pixel_auroc": self.pixel_auroc,
            "num_normal": self.num_normal,
            "num_anomalous": self.num_anomalous,
        }


@dataclass
class EvalReport:
    """Per-class and averaged image/pixel AUROC."""

    rows: List[ClassResult] = field(default_factory=list)
    config_digest: str = ""

    @property
    def image_auroc(self) -> float:
        """Arithmetic mean of the per-class image AUROCs."""
        return fmean(r.image_auroc for r in self.rows)

    @property
    def pixel_auroc(self) -> Optional[float]:
        """Arithmetic mean of the per-class pixel AUROCs (None if not evaluated)."""
        values = [r.pixel_auroc for r in self.rows if r.pixel_auroc is not None]
        return fmean(values) if values else None

    def to_lines(self) -> List[str]:
        """Render as ``class<TAB>image_auroc<TAB>pixel_auroc`` plus an ``average`` row."""

        def fmt(value: Optional[float]) -> str:
            return "nan" if value is None else f"{value:.6f}"

        lines = [f"{r.class_name}\t{fmt(r.image_auroc)}\t{fmt(r.pixel_auroc)}" for r in self.rows]
        lines.append(f"average\t{fmt(self.image_auroc)}\t{fmt(self.pixel_auroc)}")
        return lines

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "image_auroc": self.image_auroc,
            "pixel_auroc": self.pixel_auroc,
            "config_digest": self.config_digest,
        }


@dataclass
class GradCheckReport:
    """Finite-difference comparison for one operation."""

    name: str
    max_error: float
    worst_index: Tuple[int, ...] = ()
    worst_input: int = 0
    instances: int = 1
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def to_line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{self.name}\t{self.max_error:.3e}\t{self.tolerance:.0e}\t{self.instances}\t{status}"


@dataclass
class AblationRow:
    """Median AUROCs of one ablation switch combination over several seeds."""

    use_ang: bool
    use_ffm: bool
    use_mixed_attention: bool
    image_auroc: float
    pixel_auroc: Optional[float] = None
    seeds: Tuple[int, ...] = ()

    @property
    def label(self) -> str:
        parts = [name for name, on in (("ang", self.use_ang), ("ffm", self.use_ffm),
                                       ("mixed", self.use_mixed_attention)) if on]
        return "+".join(parts) or "baseline"

    def to_line(self) -> str:
        pixel = "nan" if self.pixel_auroc is None else f"{self.pixel_auroc:.6f}"
        flags = "\t".join(str(int(f)) for f in (self.use_ang, self.use_ffm, self.use_mixed_attention))
        return f"{self.label}\t{flags}\t{self.image_auroc:.6f}\t{pixel}"
