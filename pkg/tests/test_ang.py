"""Tests for the adaptive noise generator."""

import numpy as np
import pytest

from core.ang import ang_loss, ang_sample, init_noise_params, noise_rng
from core.tensor import Tape, Tensor, backward, tensor_sum
from models.params import NoiseParams
from utils.constants import ANG_INIT_WEIGHT
from utils.errors import ShapeMismatch


class TestAngSample:
    """Tests for ang_sample."""

    def test_zero_intensity(self, rng):
        """Test A = 0 leaves x unchanged."""
        x = Tensor(rng.normal(size=(4, 3)))
        x_star, _ = ang_sample(init_noise_params((4, 3), 0.0, seed=0), x, noise_rng(0, 0, 0))
        np.testing.assert_array_equal(x_star.data, x.data)

    def test_zero_weights(self, rng):
        """Test W = 0 leaves x unchanged."""
        x = Tensor(rng.normal(size=(4, 3)))
        params = NoiseParams(weight=Tensor(np.zeros((4, 3))), intensity=0.5)
        x_star, eps_prime = ang_sample(params, x, noise_rng(0, 0, 0))
        np.testing.assert_array_equal(x_star.data, x.data)
        assert not eps_prime.data.any()

    def test_replayed_noise(self, float64, rng):
        """Test W = 1, A = 0.5 gives x_star - x == 0.5 · eps from the same stream."""
        x = Tensor(rng.normal(size=(4, 3)))
        params = NoiseParams(weight=Tensor(np.ones((4, 3))), intensity=0.5, seed=7)
        x_star, _ = ang_sample(params, x, noise_rng(7, 3, 1))
        eps = noise_rng(7, 3, 1).standard_normal((4, 3))
        np.testing.assert_allclose(x_star.data - x.data, 0.5 * eps, atol=1e-12)

    def test_reproducible(self, rng):
        """Test the same seed, step and item give identical x_star."""
        x = Tensor(rng.normal(size=(4, 3)))
        params = init_noise_params((4, 3), 0.5, seed=1)
        a, _ = ang_sample(params, x, noise_rng(1, 5, 0))
        b, _ = ang_sample(params, x, noise_rng(1, 5, 0))
        np.testing.assert_array_equal(a.data, b.data)

    def test_streams_differ_per_step_and_item(self):
        """Test different steps and items draw different noise."""
        base = noise_rng(1, 0, 0).standard_normal(8)
        assert not np.array_equal(base, noise_rng(1, 1, 0).standard_normal(8))
        assert not np.array_equal(base, noise_rng(1, 0, 1).standard_normal(8))

    def test_dtype_follows_x(self, rng):
        """Test noise is cast to the token dtype."""
        x = Tensor(rng.normal(size=(2, 2)), dtype=np.float32)
        x_star, _ = ang_sample(init_noise_params((2, 2), 0.5, seed=0), x, noise_rng(0, 0, 0))
        assert x_star.dtype == np.float32

    def test_shape_mismatch(self):
        """Test W and x must agree in shape."""
        with pytest.raises(ShapeMismatch):
            ang_sample(init_noise_params((4, 3), 0.5, seed=0), Tensor(np.zeros((3, 4))), noise_rng(0, 0, 0))

    def test_negative_intensity(self):
        """Test A must be non-negative."""
        with pytest.raises(ValueError):
            init_noise_params((2, 2), -0.1, seed=0)

    def test_initial_weight(self):
        """Test W starts at the shared constant ANG_INIT_WEIGHT."""
        params = init_noise_params((2, 3), 0.5, seed=0)
        np.testing.assert_allclose(params.weight.data, np.full((2, 3), ANG_INIT_WEIGHT))

    def test_gradient_reaches_weight(self, float64, rng):
        """Test d(x_star)/dW = A · eps."""
        x = Tensor(rng.normal(size=(3, 2)))
        params = NoiseParams(weight=Tensor(np.full((3, 2), 0.2), requires_grad=True), intensity=0.5)
        with Tape() as tape:
            x_star, _ = ang_sample(params, x, noise_rng(0, 0, 0))
            loss = tensor_sum(x_star)
        backward(loss, tape)
        np.testing.assert_allclose(params.weight.grad, 0.5 * noise_rng(0, 0, 0).standard_normal((3, 2)), atol=1e-12)


class TestAngLoss:
    """Tests for ang_loss."""

    def test_substitution(self):
        """Test -0.6 · 2 + 1 · 3 = 1.8."""
        w = Tensor([3.0, 0.0])
        assert ang_loss(Tensor(2.0), w, 0.6, 1.0).item() == pytest.approx(1.8, abs=1e-6)

    def test_pure_shrinkage(self):
        """Test lambda_ang = 0 leaves only the weight norm."""
        w = Tensor([3.0, 4.0])
        assert ang_loss(Tensor(10.0), w, 0.0, 1.0).item() == pytest.approx(5.0)

    def test_gradient_signs(self, float64):
        """Test dL/dl_e = -lambda_ang and dL/dW = lambda_re · W/||W||."""
        l_e = Tensor(2.0, requires_grad=True)
        w = Tensor([3.0, 4.0], requires_grad=True)
        with Tape() as tape:
            loss = ang_loss(l_e, w, 0.6, 1.0)
        backward(loss, tape)
        assert float(l_e.grad) == pytest.approx(-0.6)
        np.testing.assert_allclose(w.grad, [0.6, 0.8])
