"""Run configuration data model for training and evaluation."""

from dataclasses import dataclass
from typing import Literal

from models.dataset import SyntheticSpec
from utils.constants import CONFIG_KEYS


@dataclass
class RunConfig:
    """Every tunable of a run; defaults are the desk-scale preset."""

    # Paradigm and data
    paradigm: Literal["unified", "separate"] = "unified"
    image_size: int = 64
    data_root: str = "data/synthetic"
    run_dir: str = "runs/default"

    # Optimization
    lr: float = 1e-4
    batch_size: int = 8
    epochs: int = 20
    precision: Literal["float32", "float64"] = "float32"
    workers: int = 1  # 1 = strict single-threaded

    # Adaptive noise generator
    ang_intensity: float = 2.0
    lambda_ang: float = 0.6
    lambda_re: float = 1.0
    ang_seed: int = 0

    # Architecture
    dilation: int = 4
    num_blocks: int = 4
    residual_period: int = 3

    # Seeds
    backbone_seed: int = 0
    init_seed: int = 0
    shuffle_seed: int = 0

    # Ablation switches
    use_ang: bool = True
    use_ffm: bool = True
    use_mixed_attention: bool = True

    # Reconstruction target: clean (X, denoising) or noised (X*)
    recon_target: Literal["noised", "clean"] = "clean"

    # Evaluation
    eval_pixel: bool = True

    # Synthetic dataset
    synth_num_classes: int = 3
    synth_train_per_class: int = 20
    synth_test_normal_per_class: int = 10
    synth_test_anomalous_per_class: int = 10
    synth_seed: int = 0

    @property
    def effective_intensity(self) -> float:
        """Noise intensity A actually used; the no-ANG ablation forces zero."""
        return self.ang_intensity if self.use_ang else 0.0

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            num_classes=self.synth_num_classes,
            image_size=self.image_size,
            seed=self.synth_seed,
            train_per_class=self.synth_train_per_class,
            test_normal_per_class=self.synth_test_normal_per_class,
            test_anomalous_per_class=self.synth_test_anomalous_per_class,
        )

    def to_dict(self) -> dict:
        """Convert to a flat dictionary keyed by dotted config names."""
        return {key: getattr(self, attr) for key, attr in CONFIG_KEYS.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Create from a flat dictionary keyed by dotted config names; missing keys keep defaults."""
        return cls(**{CONFIG_KEYS[key]: value for key, value in data.items() if key in CONFIG_KEYS})
