"""
Tests for the Adam optimizer.
"""
import unittest

import numpy as np

from src.training.optimizer import AdamState, adam_step, clip_gradients, global_norm
from src.utils.errors import DimensionError, NumericError


class TestAdamStep(unittest.TestCase):
    """Tests for a single Adam update."""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.params = [rng.normal(size=(2, 3)), rng.normal(size=4)]

    def test_zero_gradient_decays_moments(self):
        state = AdamState(m=[np.ones((2, 3)), np.ones(4)], v=[np.ones((2, 3)), np.ones(4)], t=3)
        adam_step(self.params, [np.zeros((2, 3)), np.zeros(4)], state, lr=0.1)
        np.testing.assert_allclose(state.m[1], 0.9)
        np.testing.assert_allclose(state.v[1], 0.999)
        self.assertEqual(state.t, 4)

    def test_zero_gradient_from_fresh_state(self):
        before = [p.copy() for p in self.params]
        state = AdamState.zeros_like(self.params)
        adam_step(self.params, [np.zeros((2, 3)), np.zeros(4)], state, lr=0.1)
        for p, b in zip(self.params, before):
            np.testing.assert_array_equal(p, b)

    def test_first_step_with_unit_gradient(self):
        lr = 1e-3
        before = [p.copy() for p in self.params]
        state = AdamState.zeros_like(self.params)
        adam_step(self.params, [np.ones((2, 3)), np.ones(4)], state, lr=lr, clip_norm=None)
        for p, b in zip(self.params, before):
            np.testing.assert_allclose(b - p, lr / (1.0 + 1e-8), rtol=1e-12)

    def test_clipping_bounds_step(self):
        state = AdamState.zeros_like(self.params)
        grads = [np.full((2, 3), 100.0), np.full(4, 100.0)]
        clipped, norm = clip_gradients(grads, 1.0)
        self.assertAlmostEqual(norm, np.sqrt(1e5))
        self.assertAlmostEqual(global_norm(clipped), 1.0)
        adam_step(self.params, grads, state, lr=1e-3)
        self.assertTrue(all(np.all(np.isfinite(m)) for m in state.m))

    def test_nan_gradient_names_epoch_and_batch(self):
        state = AdamState.zeros_like(self.params)
        grads = [np.zeros((2, 3)), np.array([0.0, np.nan, 0.0, 0.0])]
        with self.assertRaises(NumericError) as ctx:
            adam_step(self.params, grads, state, lr=1e-3, epoch=3, batch=7)
        self.assertEqual(ctx.exception.epoch, 3)
        self.assertEqual(ctx.exception.batch, 7)
        self.assertIn("epoch 3", str(ctx.exception))

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            adam_step(self.params, [np.zeros((3, 2)), np.zeros(4)], AdamState(), lr=1e-3)

    def test_lazy_state(self):
        state = AdamState()
        adam_step(self.params, [np.ones((2, 3)), np.ones(4)], state, lr=1e-3)
        self.assertEqual(len(state.m), 2)
        self.assertEqual(state.t, 1)

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            params = [p.copy() for p in self.params]
            state = AdamState.zeros_like(params)
            rng = np.random.default_rng(5)
            for _ in range(10):
                adam_step(params, [rng.normal(size=(2, 3)), rng.normal(size=4)], state, lr=1e-2)
            runs.append(params)
        for a, b in zip(*runs):
            np.testing.assert_array_equal(a, b)


if __name__ == '__main__':
    unittest.main()
