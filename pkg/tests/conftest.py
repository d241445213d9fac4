"""Shared fixtures for the MAAE test suite."""

import numpy as np
import pytest

from core.dataset import generate_synthetic_dataset
from core.tensor import precision
from models.dataset import SyntheticSpec
from models.run_config import RunConfig


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run calibration tests that train full desk-scale models")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale calibration runs (use --run-slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="calibration run; pass --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def float64():
    """Run the test body in 64-bit precision."""
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    """Seeded numpy Generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    """Two classes of 32×32 images, a handful per split."""
    return SyntheticSpec(
        num_classes=2,
        image_size=32,
        seed=0,
        train_per_class=3,
        test_normal_per_class=2,
        test_anomalous_per_class=3,
    )


@pytest.fixture
def tiny_dataset(tmp_path, tiny_spec):
    """Synthetic dataset written under a temporary directory."""
    return generate_synthetic_dataset(tiny_spec, tmp_path / "data")


@pytest.fixture
def tiny_config(tmp_path, tiny_dataset):
    """Small, fast run configuration over ``tiny_dataset``."""
    return RunConfig(
        image_size=32,
        data_root=str(tmp_path / "data"),
        run_dir=str(tmp_path / "run"),
        epochs=1,
        batch_size=2,
        num_blocks=2,
        residual_period=1,
        dilation=1,
        synth_num_classes=2,
        synth_train_per_class=3,
        synth_test_normal_per_class=2,
        synth_test_anomalous_per_class=3,
    )
