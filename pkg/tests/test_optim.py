"""Tests for the Adam optimizer."""

import math

import numpy as np
import pytest

from core.optim import adam_step
from models.params import AdamState
from utils.errors import ShapeMismatch


class TestAdamStep:
    """Tests for adam_step."""

    def test_zero_gradient(self):
        """Test a zero gradient leaves parameters and moments at zero change."""
        params = {"w": np.array([1.0, -2.0])}
        new, state = adam_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(new["w"], params["w"])
        assert not state.m["w"].any() and not state.v["w"].any()
        assert state.t == 1

    def test_inputs_untouched(self):
        """Test the call returns new arrays and leaves its inputs alone."""
        params = {"w": np.array([1.0])}
        state = AdamState()
        adam_step(params, {"w": np.array([0.5])}, state, lr=0.1)
        assert params["w"][0] == 1.0
        assert state.t == 0 and state.m == {}

    def test_constant_gradient_limit(self):
        """Test a constant gradient moves each step by lr · sign(g)."""
        params, state = {"w": np.array([0.0, 0.0])}, AdamState()
        grads = {"w": np.array([0.3, -2.0])}
        for _ in range(50):
            new, state = adam_step(params, grads, state, lr=0.01)
            np.testing.assert_allclose(new["w"] - params["w"], [-0.01, 0.01], rtol=1e-6)
            params = new

    def test_hand_trace(self):
        """Test three scalar steps against the update formula written out by hand."""
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p, m, v = 1.0, 0.0, 0.0
        params, state = {"w": np.array(1.0)}, AdamState()
        for t, g in enumerate([0.5, -0.2, 0.1], start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
            params, state = adam_step(params, {"w": np.array(g)}, state, lr=lr)
            assert float(params["w"]) == pytest.approx(p, rel=1e-12)
            assert float(state.m["w"]) == pytest.approx(m, rel=1e-12)
            assert float(state.v["w"]) == pytest.approx(v, rel=1e-12)
        assert state.t == 3

    def test_first_step_value(self):
        """Test the first step moves by lr regardless of gradient size."""
        new, _ = adam_step({"w": np.array([1.0])}, {"w": np.array([0.5])}, AdamState(), lr=0.1)
        assert new["w"][0] == pytest.approx(0.9, abs=1e-7)

    def test_shape_mismatch(self):
        """Test gradient shapes must match their parameters."""
        with pytest.raises(ShapeMismatch):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=0.1)
