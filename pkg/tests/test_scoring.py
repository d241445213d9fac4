"""Tests for anomaly maps, AUROC and heatmaps."""

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from PIL import Image

from core.scoring import anomaly_map, anomaly_score, auroc, emit_heatmap, heatmap_pixels, pixel_auroc
from core.tensor import Tensor
from models.report import AnomalyMap
from tests.oracles import pairwise_auroc
from utils.errors import DegenerateLabels, EmptyMap, ShapeMismatch


class TestAnomalyMap:
    """Tests for anomaly_map."""

    def test_perfect_reconstruction(self, rng):
        """Test y == x_ref gives an all-zero map."""
        x = Tensor(rng.normal(size=(16, 5)))
        amap = anomaly_map(x, x, (4, 4), (32, 32))
        assert amap.values.shape == (32, 32)
        assert not amap.values.any()

    def test_single_token(self):
        """Test a [3, 4] residual on a 1×1 grid gives a constant map of 5."""
        amap = anomaly_map(Tensor([[3.0, 4.0]]), Tensor([[0.0, 0.0]]), (1, 1), (8, 8))
        np.testing.assert_allclose(amap.values, np.full((8, 8), 5.0))

    def test_token_norms_and_corners(self, rng):
        """Test corners of the upsampled map equal the corner token norms."""
        y, x = rng.normal(size=(16, 5)), rng.normal(size=(16, 5))
        amap = anomaly_map(Tensor(y), Tensor(x), (4, 4), (32, 32), image_id="a")
        norms = np.array([np.sqrt(sum((y[i, c] - x[i, c]) ** 2 for c in range(5))) for i in range(16)]).reshape(4, 4)
        for (r, c), (tr, tc) in {(0, 0): (0, 0), (0, 31): (0, 3), (31, 0): (3, 0), (31, 31): (3, 3)}.items():
            assert amap.values[r, c] == pytest.approx(norms[tr, tc], abs=1e-5)
        assert amap.image_id == "a"
        assert amap.values.dtype == np.float64

    def test_nonnegative(self, rng):
        """Test map values are never negative."""
        amap = anomaly_map(Tensor(rng.normal(size=(16, 3))), Tensor(np.zeros((16, 3))), (4, 4), (17, 23))
        assert amap.values.min() >= 0.0

    def test_shape_mismatch(self):
        """Test y and x_ref must agree."""
        with pytest.raises(ShapeMismatch):
            anomaly_map(Tensor(np.zeros((4, 2))), Tensor(np.zeros((4, 3))), (2, 2), (8, 8))


class TestAnomalyScore:
    """Tests for anomaly_score."""

    def test_zero_map(self):
        """Test an all-zero map scores 0."""
        assert anomaly_score(AnomalyMap(np.zeros((4, 4)))) == 0.0

    def test_spike(self):
        """Test a single spike is the score."""
        values = np.zeros((4, 4))
        values[2, 1] = 7.5
        assert anomaly_score(AnomalyMap(values)) == 7.5

    def test_empty(self):
        """Test EmptyMap for zero pixels."""
        with pytest.raises(EmptyMap):
            anomaly_score(AnomalyMap(np.zeros((0, 0))))


class TestAuroc:
    """Tests for auroc and pixel_auroc."""

    def test_perfect(self):
        """Test perfect separation gives 1."""
        assert auroc([0.1, 0.9], [0, 1]) == 1.0

    def test_inverted(self):
        """Test inverted scores give 0."""
        assert auroc([0.9, 0.1], [0, 1]) == 0.0

    def test_all_ties(self):
        """Test all-equal scores give 0.5."""
        assert auroc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_pairwise_oracle(self, rng):
        """Test a random 50-sample case against pairwise comparison."""
        scores = np.round(rng.uniform(size=50), 1)
        labels = rng.integers(0, 2, size=50)
        labels[:2] = [0, 1]
        assert auroc(scores, labels) == pytest.approx(pairwise_auroc(scores, labels), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=30))
    def test_property_matches_pairwise(self, pairs):
        """Test rank AUROC equals pairwise AUROC for arbitrary tied scores."""
        scores = [float(s) for s, _ in pairs]
        labels = [int(l) for _, l in pairs]
        if len(set(labels)) < 2:
            with pytest.raises(DegenerateLabels):
                auroc(scores, labels)
            return
        assert auroc(scores, labels) == pytest.approx(pairwise_auroc(scores, labels), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=4, max_size=20),
           st.floats(0.1, 10), st.floats(-5, 5))
    def test_invariant_to_monotone_transform(self, scores, scale, shift):
        """Test positive affine maps of the scores leave AUROC unchanged."""
        labels = [i % 2 for i in range(len(scores))]
        transformed = [scale * s + shift for s in scores]
        assume(len(set(scores)) == len(scores) and len(set(transformed)) == len(transformed))
        assert auroc(transformed, labels) == pytest.approx(auroc(scores, labels))

    def test_degenerate(self):
        """Test one-class labels raise."""
        with pytest.raises(DegenerateLabels):
            auroc([0.1, 0.2], [1, 1])

    def test_length_mismatch(self):
        """Test scores and labels must align."""
        with pytest.raises(ShapeMismatch):
            auroc([0.1, 0.2, 0.3], [0, 1])

    def test_pixel_map_equals_mask(self):
        """Test a map equal to its mask scores 1."""
        mask = np.zeros((4, 4), dtype=bool)
        mask[1:3, 1:3] = True
        assert pixel_auroc([AnomalyMap(mask.astype(float))], [mask]) == 1.0

    def test_pixel_inverted(self):
        """Test map = 1 - mask scores 0."""
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, :2] = True
        assert pixel_auroc([AnomalyMap(1.0 - mask)], [mask]) == 0.0

    def test_pixel_pooled_oracle(self, rng):
        """Test three random 8×8 maps against pooled pairwise comparison."""
        maps = [AnomalyMap(np.round(rng.uniform(size=(8, 8)), 2)) for _ in range(3)]
        masks = [rng.uniform(size=(8, 8)) > 0.7 for _ in range(3)]
        expected = pairwise_auroc(np.concatenate([m.values.ravel() for m in maps]),
                                  np.concatenate([m.ravel() for m in masks]))
        assert pixel_auroc(maps, masks) == pytest.approx(expected, abs=1e-12)

    def test_pixel_all_normal(self):
        """Test masks without anomalous pixels are degenerate."""
        with pytest.raises(DegenerateLabels):
            pixel_auroc([AnomalyMap(np.ones((2, 2)))], [np.zeros((2, 2), dtype=bool)])


class TestHeatmap:
    """Tests for heatmap_pixels and emit_heatmap."""

    def test_constant_map_is_mid_gray(self):
        """Test a flat map renders as 128 everywhere."""
        pixels = heatmap_pixels(AnomalyMap(np.full((3, 3), 2.5)))
        assert pixels.dtype == np.uint8
        assert (pixels == 128).all()

    def test_min_max(self, rng):
        """Test the extremes map to 0 and 255."""
        values = rng.uniform(size=(5, 5))
        pixels = heatmap_pixels(AnomalyMap(values))
        assert pixels[np.unravel_index(values.argmax(), values.shape)] == 255
        assert pixels[np.unravel_index(values.argmin(), values.shape)] == 0

    def test_pgm_file(self, tmp_path, rng):
        """Test the file is a binary P5 PGM with the map's dimensions."""
        amap = AnomalyMap(rng.uniform(size=(6, 9)))
        path = emit_heatmap(amap, tmp_path / "maps" / "a.pgm")
        assert path.read_bytes().startswith(b"P5")
        with Image.open(path) as img:
            assert img.mode == "L"
            assert img.size == (9, 6)
            np.testing.assert_array_equal(np.asarray(img), heatmap_pixels(amap))

    def test_empty_map(self, tmp_path):
        """Test EmptyMap for a map with no pixels."""
        with pytest.raises(EmptyMap):
            emit_heatmap(AnomalyMap(np.zeros((0, 3))), tmp_path / "a.pgm")
