"""Unit tests for data models."""

from pathlib import Path

import numpy as np
import pytest

from core.tensor import Tensor
from models.dataset import DatasetIndex, DatasetRecord, SyntheticSpec
from models.features import FeatureStack, FusedFeature
from models.params import NoiseParams, ParamGroup
from models.report import AblationRow, ClassResult, EvalReport, GradCheckReport
from models.run_config import RunConfig
from models.train_state import LossRecord
from utils.errors import ConfigMismatch, ShapeMismatch


def stack_of(*shapes):
    return FeatureStack(stages=[Tensor(np.zeros(shape)) for shape in shapes])


class TestRunConfig:
    """Tests for RunConfig."""

    def test_to_dict_from_dict(self):
        """Test serialization and deserialization by dotted keys."""
        config = RunConfig(paradigm="separate", lambda_ang=0.3, use_mixed_attention=False)
        data = config.to_dict()
        assert data["ang.lambda_ang"] == 0.3
        assert data["ablation.use_mixed_attention"] is False
        assert RunConfig.from_dict(data) == config

    def test_from_dict_ignores_unknown(self):
        """Test unknown keys are dropped and missing keys keep defaults."""
        config = RunConfig.from_dict({"epochs": 2, "theme": "dark"})
        assert config.epochs == 2
        assert config.lr == RunConfig().lr

    def test_effective_intensity(self):
        """Test the no-noise ablation forces A = 0."""
        assert RunConfig(ang_intensity=0.7).effective_intensity == 0.7
        assert RunConfig(ang_intensity=0.7, use_ang=False).effective_intensity == 0.0

    def test_synthetic_spec(self):
        """Test the synth keys build a SyntheticSpec at the run's image size."""
        spec = RunConfig(image_size=32, synth_num_classes=2, synth_seed=5).synthetic_spec()
        assert (spec.num_classes, spec.image_size, spec.seed) == (2, 32, 5)


class TestDataset:
    """Tests for DatasetRecord, DatasetIndex and SyntheticSpec."""

    def test_image_id(self):
        """Test the id combines class, split, defect directory and stem."""
        record = DatasetRecord(Path("bottle/test/crack/007.png"), 1, "test", "anomalous")
        assert record.image_id == "1/test/crack/007"
        assert record.is_anomalous

    def test_index_splits(self):
        """Test split filtering and counts."""
        records = [
            DatasetRecord(Path("a/train/good/0.png"), 0, "train", "normal"),
            DatasetRecord(Path("a/test/good/0.png"), 0, "test", "normal"),
            DatasetRecord(Path("b/test/hole/0.png"), 1, "test", "anomalous"),
        ]
        index = DatasetIndex(records=records, class_names=["a", "b"])
        assert len(index.train) == 1
        assert index.split("test", 1) == [records[2]]
        assert index.counts() == {"train": 1, "test": 2, "anomalous": 1}
        assert index.class_name(1) == "b"

    def test_spec_validation(self):
        """Test invalid synthetic specs are refused."""
        with pytest.raises(ValueError):
            SyntheticSpec(num_classes=0)
        with pytest.raises(ValueError):
            SyntheticSpec(anomaly_kinds=["scratch"])
        with pytest.raises(ValueError):
            SyntheticSpec(anomaly_kinds=[])

    def test_class_seed(self):
        """Test class seeds differ per class and per dataset seed."""
        assert SyntheticSpec(seed=0).class_seed(1) != SyntheticSpec(seed=0).class_seed(2)
        assert SyntheticSpec(seed=1).class_seed(0) != SyntheticSpec(seed=0).class_seed(0)


class TestFeatures:
    """Tests for FeatureStack and FusedFeature."""

    def test_valid_stack(self):
        """Test a halving pyramid validates and reports channels and grid."""
        stack = stack_of((2, 16, 16), (3, 8, 8), (4, 4, 4), (5, 2, 2))
        stack.validate()
        assert stack.channels == (2, 3, 4, 5)
        assert stack.grid == (2, 2)

    def test_wrong_stage_count(self):
        """Test stacks need four stages."""
        with pytest.raises(ConfigMismatch):
            stack_of((2, 4, 4), (3, 2, 2)).validate()

    def test_non_halving(self):
        """Test each stage must halve the previous one."""
        with pytest.raises(ShapeMismatch):
            stack_of((2, 16, 16), (3, 8, 8), (4, 8, 8), (5, 4, 4)).validate()

    def test_fused_shape_checks(self):
        """Test token count must equal the grid size and width the channel plan."""
        FusedFeature(Tensor(np.zeros((4, 6))), (2, 2), (2, 4))
        with pytest.raises(ShapeMismatch):
            FusedFeature(Tensor(np.zeros((5, 6))), (2, 2))
        with pytest.raises(ShapeMismatch):
            FusedFeature(Tensor(np.zeros((4, 6))), (2, 2), (2, 3))


class TestParams:
    """Tests for parameter groups."""

    def test_noise_intensity_nonnegative(self):
        """Test negative noise intensity is refused."""
        with pytest.raises(ValueError):
            NoiseParams(weight=Tensor(np.zeros((2, 2))), intensity=-0.1)

    def test_leaves_share_values(self):
        """Test leaves hold the same values and report zero gradients before backward."""
        params = NoiseParams(weight=Tensor(np.full((2, 3), 0.01)))
        leaves = params.leaves()
        np.testing.assert_array_equal(leaves.arrays()["weight"], params.arrays()["weight"])
        assert not leaves.grads()["weight"].any()
        assert params.num_parameters() == 6

    def test_group_must_define_names(self):
        """Test a group without named and with_tensors cannot be instantiated."""
        class Partial(ParamGroup):
            def named(self):
                return {}

        with pytest.raises(TypeError):
            ParamGroup()
        with pytest.raises(TypeError):
            Partial()


class TestReports:
    """Tests for report rendering."""

    def test_loss_record_row(self):
        """Test the CSV row keeps full float precision."""
        assert LossRecord(3, 0.5, -0.25, 0.1).to_csv_row() == "3,0.5,-0.25,0.1"

    def test_eval_report_lines(self):
        """Test per-class rows and the average row."""
        report = EvalReport(rows=[ClassResult("a", 0.8, 0.9), ClassResult("b", 1.0, None)])
        assert report.image_auroc == pytest.approx(0.9)
        assert report.pixel_auroc == pytest.approx(0.9)
        assert report.to_lines() == [
            "a\t0.800000\t0.900000",
            "b\t1.000000\tnan",
            "average\t0.900000\t0.900000",
        ]

    def test_eval_report_without_pixels(self):
        """Test pixel AUROC is None when no class has it."""
        assert EvalReport(rows=[ClassResult("a", 0.7)]).pixel_auroc is None

    def test_ablation_row(self):
        """Test labels and the TSV line."""
        row = AblationRow(True, False, True, 0.75, None, (0, 1, 2))
        assert row.label == "ang+mixed"
        assert row.to_line() == "ang+mixed\t1\t0\t1\t0.750000\tnan"
        assert AblationRow(False, False, False, 0.5).label == "baseline"

    def test_gradcheck_report(self):
        """Test the pass threshold is inclusive."""
        assert GradCheckReport("op", 1e-4).passed
        assert not GradCheckReport("op", 2e-4).passed
