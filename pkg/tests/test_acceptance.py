"""
Desk-scale calibration runs on the synthetic three-class dataset.

These train real models for minutes each and only run with ``--run-slow``.
"""

import statistics
from dataclasses import replace

import numpy as np
import pytest

from core.config_manager import ConfigManager
from core.dataset import generate_synthetic_dataset
from core.trainer import FeatureCache, evaluate, run_ablation, train

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    """Desk preset plus its generated dataset and a shared feature cache."""
    root = tmp_path_factory.mktemp("desk")
    config = ConfigManager().load("desk", [f"data.root={root / 'data'}", f"run.dir={root / 'runs'}"])
    dataset = generate_synthetic_dataset(config.synthetic_spec(), root / "data")
    return config, dataset, FeatureCache(config.backbone_seed, config.image_size)


def seeded(config, seed, name):
    return replace(config, init_seed=seed, ang_seed=seed, shuffle_seed=seed,
                   run_dir=f"{config.run_dir}/{name}/seed{seed}")


def median_report(config, dataset, cache, name):
    reports = []
    for seed in SEEDS:
        run = seeded(config, seed, name)
        train(run, dataset, cache)
        reports.append(evaluate(run, dataset, cache))
    return reports


class TestCalibration:
    """Directional results at desk scale."""

    def test_reconstruction_loss_halves(self, desk):
        """Test the last epoch's mean L_e is at most half the L_e of the first step."""
        config, dataset, cache = desk
        config = replace(config, run_dir=f"{config.run_dir}/loss")
        history = train(config, dataset, cache)[0].state.history
        steps_per_epoch = len(history) // config.epochs
        final = np.mean([r.recon_loss for r in history[-steps_per_epoch:]])
        assert final <= 0.5 * history[0].recon_loss
        assert history[-1].noise_norm > 0.1 * history[0].noise_norm

    def test_unified_bar(self, desk):
        """Test unified training clears image 0.90 and pixel 0.85."""
        config, dataset, cache = desk
        train(config, dataset, cache)
        report = evaluate(config, dataset, cache)
        assert report.image_auroc >= 0.90
        assert report.pixel_auroc >= 0.85

    def test_noise_prevents_identity_shortcut(self, desk):
        """Test removing the noise generator costs at least 0.05 image AUROC."""
        config, dataset, cache = desk
        with_ang = median_report(config, dataset, cache, "ang")
        without = median_report(replace(config, use_ang=False), dataset, cache, "no_ang")
        gap = (statistics.median(r.image_auroc for r in with_ang)
               - statistics.median(r.image_auroc for r in without))
        assert gap >= 0.05

    def test_unified_matches_separate(self, desk):
        """Test the unified model stays within 0.05 of per-class models."""
        config, dataset, cache = desk
        unified = median_report(config, dataset, cache, "unified")
        separate = median_report(replace(config, paradigm="separate"), dataset, cache, "separate")
        gap = (statistics.median(r.image_auroc for r in unified)
               - statistics.median(r.image_auroc for r in separate))
        assert abs(gap) <= 0.05

    def test_full_configuration_wins_ablation(self, desk):
        """Test ANG + FFM + mixed attention is the best of the six rows."""
        config, dataset, _ = desk
        rows = run_ablation(config, dataset, seeds=SEEDS)
        full = rows[-1]
        assert full.label == "ang+ffm+mixed"
        assert full.image_auroc == max(r.image_auroc for r in rows)
        assert full.pixel_auroc == max(r.pixel_auroc for r in rows)

