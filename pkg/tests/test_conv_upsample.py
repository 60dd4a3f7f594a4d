"""Convolution and bilinear-resize tests against loop oracles."""

import numpy as np
import pytest

from ringdepth import (
    DimensionError,
    GradTape,
    Tensor,
    conv2d,
    gradcheck,
    mul,
    tensor_sum,
    upsample_bilinear,
)


def conv2d_loop(x, w, b, stride):
    """Direct six-loop cross-correlation with same padding (float64)."""
    B, Cin, H, W = x.shape
    Cout, _, k, _ = w.shape
    p = (k - 1) // 2
    Ho = -(-H // stride)
    Wo = -(-W // stride)
    xp = np.zeros((B, Cin, H + 2 * p, W + 2 * p), dtype=np.float64)
    xp[:, :, p:p + H, p:p + W] = x
    out = np.zeros((B, Cout, Ho, Wo), dtype=np.float64)
    for n in range(B):
        for o in range(Cout):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(Cin):
                        for ki in range(k):
                            for kj in range(k):
                                acc += xp[n, c, i * stride + ki, j * stride + kj] \
                                    * w[o, c, ki, kj]
                    out[n, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
        w = np.zeros((3, 3, 1, 1), dtype=np.float32)
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        out = conv2d(Tensor(x), Tensor(w))
        np.testing.assert_array_equal(out.data, x)

    def test_ones_kernel_on_constant_interior(self):
        c = 2.5
        x = Tensor(np.full((1, 1, 6, 6), c, dtype=np.float32))
        w = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
        out = conv2d(x, w).data
        # Interior pixels see the full 3x3 support; border rows see padding.
        np.testing.assert_allclose(out[0, 0, 1:-1, 1:-1], 9 * c, rtol=1e-6)
        np.testing.assert_allclose(out[0, 0, 0, 0], 4 * c, rtol=1e-6)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_random_against_loop_oracle(self, stride):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 2, 6, 6))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
        expected = conv2d_loop(x, w, b, stride)
        np.testing.assert_allclose(out, expected, rtol=1e-6, atol=1e-9)

    def test_stride2_output_extents_round_up(self):
        w = Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32))
        out = conv2d(Tensor(np.zeros((1, 1, 5, 7), dtype=np.float32)), w, stride=2)
        assert out.shape == (1, 1, 3, 4)
        out = conv2d(Tensor(np.zeros((1, 1, 6, 6), dtype=np.float32)), w, stride=2)
        assert out.shape == (1, 1, 3, 3)

    def test_channel_mismatch_rejected(self):
        x = Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32))
        w = Tensor(np.zeros((2, 4, 3, 3), dtype=np.float32))
        with pytest.raises(DimensionError):
            conv2d(x, w)

    def test_even_kernel_rejected(self):
        x = Tensor(np.zeros((1, 1, 4, 4), dtype=np.float32))
        with pytest.raises(DimensionError):
            conv2d(x, Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32)))

    def test_non_same_pad_rejected(self):
        x = Tensor(np.zeros((1, 1, 4, 4), dtype=np.float32))
        w = Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32))
        with pytest.raises(DimensionError):
            conv2d(x, w, pad=0)
        assert conv2d(x, w, pad=1).shape == (1, 1, 4, 4)

    def test_bad_stride_rejected(self):
        x = Tensor(np.zeros((1, 1, 4, 4), dtype=np.float32))
        w = Tensor(np.zeros((1, 1, 3, 3), dtype=np.float32))
        with pytest.raises(DimensionError):
            conv2d(x, w, stride=3)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_gradcheck(self, stride):
        rng = np.random.default_rng(9)
        x = Tensor(rng.standard_normal((1, 2, 5, 5)), dtype=np.float64)
        w = Tensor(rng.standard_normal((2, 2, 3, 3)) * 0.5, dtype=np.float64)
        b = Tensor(rng.standard_normal(2), dtype=np.float64)
        coef = Tensor(rng.standard_normal(
            conv2d(x, w, b, stride=stride).shape), dtype=np.float64)

        def f(xv, wv, bv):
            return tensor_sum(mul(conv2d(xv, wv, bv, stride=stride), coef))

        report = gradcheck(f, [x, w, b], eps=1e-5, tol=1e-5)
        assert report.passed, str(report)


class TestUpsampleBilinear:
    def test_constant_preserved(self):
        x = Tensor(np.full((1, 1, 3, 4), 5.0, dtype=np.float32))
        out = upsample_bilinear(x, 6, 8).data
        np.testing.assert_allclose(out, 5.0, rtol=1e-6)
        out3 = upsample_bilinear(x, 9, 12).data
        np.testing.assert_allclose(out3, 5.0, rtol=1e-6)

    def test_two_point_doubling(self):
        # Half-pixel centers: [0, 1] doubled -> [0, 0.25, 0.75, 1].
        x = Tensor(np.array([[[[0.0, 1.0]]]], dtype=np.float32))
        out = upsample_bilinear(x, 1, 4).data
        np.testing.assert_allclose(out[0, 0, 0], [0.0, 0.25, 0.75, 1.0],
                                   rtol=0, atol=1e-7)

    def test_pooling_roundtrip_preserves_mean(self):
        """2x upsample then 2x average pooling keeps the map mean."""
        rng = np.random.default_rng(17)
        x = rng.standard_normal((2, 3, 4, 6)).astype(np.float32)
        up = upsample_bilinear(Tensor(x), 8, 12).data
        pooled = 0.25 * (up[:, :, 0::2, 0::2] + up[:, :, 1::2, 0::2]
                         + up[:, :, 0::2, 1::2] + up[:, :, 1::2, 1::2])
        assert pooled.shape == x.shape
        np.testing.assert_allclose(pooled.mean(), x.mean(), atol=1e-5)

    def test_output_extents(self):
        x = Tensor(np.zeros((1, 2, 4, 3), dtype=np.float32))
        assert upsample_bilinear(x, 8, 6).shape == (1, 2, 8, 6)
        assert upsample_bilinear(x, 4, 3).shape == (1, 2, 4, 3)

    def test_zero_or_shrinking_target_rejected(self):
        x = Tensor(np.zeros((1, 1, 4, 4), dtype=np.float32))
        with pytest.raises(DimensionError):
            upsample_bilinear(x, 0, 8)
        with pytest.raises(DimensionError):
            upsample_bilinear(x, 2, 8)

    def test_rank_checked(self):
        with pytest.raises(DimensionError):
            upsample_bilinear(Tensor(np.zeros((4, 4))), 8, 8)

    def test_adjoint_via_gradcheck(self):
        rng = np.random.default_rng(23)
        x = Tensor(rng.standard_normal((1, 2, 3, 4)), dtype=np.float64)
        coef = Tensor(rng.standard_normal((1, 2, 6, 8)), dtype=np.float64)

        def f(xv):
            return tensor_sum(mul(upsample_bilinear(xv, 6, 8), coef))

        report = gradcheck(f, [x], eps=1e-6, tol=1e-6)
        assert report.passed, str(report)

    def test_adjoint_exact_transpose(self):
        """Backward of sum == column sums of the interpolation operator."""
        x = Tensor(np.zeros((1, 1, 3, 3), dtype=np.float64), requires_grad=True)
        with GradTape() as tape:
            y = tensor_sum(upsample_bilinear(x, 6, 6))
        tape.backward(y)
        # Every output pixel distributes weight 1, so per-input column sums
        # total out_h*out_w.
        np.testing.assert_allclose(x.grad.sum(), 36.0, rtol=1e-12)
