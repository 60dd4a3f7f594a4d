"""Adam tests against a scalar reference implementation."""

import numpy as np
import pytest

from ringdepth import OptimState, Tensor, TrainingError, adam_step


def adam_oracle(p0, gs, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook per-step scalar Adam replay."""
    p, m, v = float(p0), 0.0, 0.0
    for t, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


class TestAdamStep:
    def test_zero_gradient_is_noop(self):
        p = Tensor(np.array([1.0, -2.0], dtype=np.float32))
        state = OptimState(lr=0.1)
        adam_step({"w": p}, {"w": np.zeros(2, dtype=np.float32)}, state)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert state.step == 1

    def test_first_step_magnitude_is_lr(self):
        """Bias correction makes |dp| ~ lr on step one, whatever g's scale."""
        for g in (0.5, 3.0, 1e-3):
            p = Tensor(np.array([1.0], dtype=np.float64))
            adam_step({"w": p}, {"w": np.array([g])}, OptimState(lr=0.01))
            np.testing.assert_allclose(abs(1.0 - p.data[0]), 0.01, rtol=1e-4)

    def test_step_direction_opposes_gradient(self):
        p = Tensor(np.array([0.0, 0.0], dtype=np.float64))
        adam_step({"w": p}, {"w": np.array([2.0, -2.0])}, OptimState(lr=0.1))
        assert p.data[0] < 0 < p.data[1]

    def test_five_steps_match_scalar_oracle(self):
        gs = [0.3, -0.7, 0.2, 0.9, -0.1]
        p = Tensor(np.array([0.5], dtype=np.float64))
        state = OptimState(lr=1e-2)
        for g in gs:
            adam_step({"w": p}, {"w": np.array([g])}, state)
        expected = adam_oracle(0.5, gs, lr=1e-2)
        np.testing.assert_allclose(p.data[0], expected, rtol=1e-7, atol=1e-12)

    def test_state_persists_across_calls(self):
        p = Tensor(np.array([1.0], dtype=np.float64))
        state = OptimState()
        adam_step({"w": p}, {"w": np.array([1.0])}, state)
        m1 = state.m["w"].copy()
        adam_step({"w": p}, {"w": np.array([1.0])}, state)
        assert state.step == 2
        assert state.m["w"][0] != m1[0]

    def test_updates_are_in_place(self):
        p = Tensor(np.array([1.0], dtype=np.float64))
        buf = p.data
        adam_step({"w": p}, {"w": np.array([1.0])}, OptimState(lr=0.1))
        assert p.data is buf

    def test_multiple_parameters_independent(self):
        pa = Tensor(np.array([1.0], dtype=np.float64))
        pb = Tensor(np.array([1.0], dtype=np.float64))
        state = OptimState(lr=0.1)
        adam_step({"a": pa, "b": pb},
                  {"a": np.array([1.0]), "b": np.array([-1.0])}, state)
        np.testing.assert_allclose(pa.data + pb.data, 2.0, atol=1e-12)
        assert pa.data[0] < 1.0 < pb.data[0]

    def test_missing_gradient_named(self):
        p = Tensor(np.array([1.0], dtype=np.float32))
        with pytest.raises(TrainingError) as exc:
            adam_step({"enc.w": p}, {}, OptimState())
        assert "enc.w" in str(exc.value)

    def test_shape_mismatch_named(self):
        p = Tensor(np.ones(3, dtype=np.float32))
        with pytest.raises(TrainingError):
            adam_step({"w": p}, {"w": np.ones(4, dtype=np.float32)}, OptimState())

    def test_non_finite_gradient_named(self):
        p = Tensor(np.ones(2, dtype=np.float32))
        g = np.array([1.0, np.nan], dtype=np.float32)
        with pytest.raises(TrainingError) as exc:
            adam_step({"dec.b": p}, {"dec.b": g}, OptimState())
        assert "dec.b" in str(exc.value)

    def test_moment_buffers_match_shapes(self):
        p = Tensor(np.ones((2, 3), dtype=np.float32))
        state = OptimState()
        adam_step({"w": p}, {"w": np.ones((2, 3), dtype=np.float32)}, state)
        assert state.m["w"].shape == (2, 3)
        assert state.v["w"].shape == (2, 3)
