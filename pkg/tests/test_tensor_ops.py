import numpy as np
import pytest

from burstsr import tensor_ops as T
from burstsr.errors import ShapeError, ValidationError

from oracles import (
    conv2d_loop,
    conv_transpose2d_loop,
    dot_sum,
    linear_loop,
    mean_pool_loop,
    pixel_shuffle_index,
)


class TestConv2d:
    def test_ones_counting(self):
        x = np.ones((1, 3, 3))
        k = np.ones((1, 1, 3, 3))
        out = T.conv2d(x, k, stride=1, padding=1)
        assert out.shape == (1, 3, 3)
        assert out[0, 1, 1] == 9.0
        for i, j in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            assert out[0, i, j] == 4.0

    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 5, 7))
        k = np.ones((1, 1, 1, 1))
        assert np.array_equal(T.conv2d(x, k, 1, 0), x)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 5, 5))
        k = rng.normal(size=(2, 4, 3, 3))
        got = T.conv2d(x, k, stride=1, padding=1)
        want = conv2d_loop(x, k, stride=1, padding=1)
        assert np.max(np.abs(got - want)) < 1e-12

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (3, 2)])
    def test_strided_matches_loop_oracle(self, stride, padding):
        rng = np.random.default_rng(2 + stride)
        x = rng.normal(size=(3, 8, 9))
        k = rng.normal(size=(2, 3, 3, 3))
        got = T.conv2d(x, k, stride=stride, padding=padding)
        want = conv2d_loop(x, k, stride=stride, padding=padding)
        assert got.shape == want.shape
        assert np.max(np.abs(got - want)) < 1e-12

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError, match="channels"):
            T.conv2d(np.zeros((3, 4, 4)), np.zeros((1, 2, 3, 3)))

    def test_even_kernel_rejected(self):
        with pytest.raises(ValidationError):
            T.conv2d(np.zeros((1, 4, 4)), np.zeros((1, 1, 2, 2)))


class TestConvTranspose2d:
    def test_single_tap_spread(self):
        rng = np.random.default_rng(3)
        k = rng.normal(size=(1, 1, 3, 3))
        v = 2.5
        out = T.conv_transpose2d(np.full((1, 1, 1), v), k, stride=1, padding=0)
        assert out.shape == (1, 3, 3)
        assert np.allclose(out, v * k[0], atol=0, rtol=0)

    def test_zero_input_zero_output(self):
        out = T.conv_transpose2d(np.zeros((2, 4, 4)), np.ones((2, 3, 3, 3)), stride=2, padding=1)
        assert out.shape == (3, 7, 7)
        assert np.all(out == 0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 4, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        for stride, padding in [(1, 0), (2, 1), (3, 0)]:
            got = T.conv_transpose2d(x, k, stride=stride, padding=padding)
            want = conv_transpose2d_loop(x, k, stride=stride, padding=padding)
            assert got.shape == want.shape
            assert np.max(np.abs(got - want)) < 1e-12

    def test_adjoint_identity(self):
        # input sizes are built from the conv output sizes so the transpose
        # maps back onto exactly the input grid
        rng = np.random.default_rng(5)
        for _ in range(20):
            c_in = int(rng.integers(1, 4))
            c_out = int(rng.integers(1, 4))
            k = int(rng.choice([1, 3, 5]))
            stride = int(rng.integers(1, 3))
            padding = int(rng.integers(0, k // 2 + 1))
            h = (int(rng.integers(1, 7)) - 1) * stride + k - 2 * padding
            w = (int(rng.integers(1, 7)) - 1) * stride + k - 2 * padding
            if h < 1 or w < 1:
                continue
            x = rng.normal(size=(c_in, h, w))
            kern = rng.normal(size=(c_out, c_in, k, k))
            y = rng.normal(size=T.conv2d(x, kern, stride, padding).shape)
            lhs = dot_sum(T.conv2d(x, kern, stride, padding), y)
            rhs = dot_sum(x, T.conv_transpose2d(y, kern, stride, padding))
            norm = np.linalg.norm(x) * np.linalg.norm(y) * np.linalg.norm(kern)
            assert abs(lhs - rhs) <= 1e-10 * max(norm, 1.0)


class TestLinear:
    def test_identity(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3, 4, 5))
        assert np.array_equal(T.linear(x, np.eye(5), np.zeros(5)), x)

    def test_all_ones_row_sums(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 6))
        out = T.linear(x, np.ones((1, 6)))
        assert np.allclose(out[:, 0], x.sum(axis=1), rtol=1e-14)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2, 3, 7))
        w = rng.normal(size=(4, 7))
        b = rng.normal(size=4)
        assert np.max(np.abs(T.linear(x, w, b) - linear_loop(x, w, b))) < 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            T.linear(np.zeros((2, 5)), np.zeros((3, 4)))


class TestPooling:
    def test_constant_channel(self):
        x = np.full((3, 4, 4), 0.0)
        x[1] = 2.5
        out = T.adaptive_avg_pool_1x1(x)
        assert out.shape == (3, 1, 1)
        assert out[1, 0, 0] == 2.5

    def test_mean_of_2x2(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert T.adaptive_avg_pool_1x1(x)[0, 0, 0] == 2.5

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(5, 6, 7))
        assert np.max(np.abs(T.adaptive_avg_pool_1x1(x) - mean_pool_loop(x))) < 1e-12


class TestPixelShuffle:
    def test_definitional_2x2(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1, 1)
        out = T.pixel_shuffle(x, 2)
        assert np.array_equal(out, np.array([[[1.0, 2.0], [3.0, 4.0]]]))

    def test_roundtrip_identity(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(8, 3, 5))
        assert np.array_equal(T.pixel_unshuffle(T.pixel_shuffle(x, 2), 2), x)

    def test_matches_index_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(8, 3, 3))
        assert np.array_equal(T.pixel_shuffle(x, 2), pixel_shuffle_index(x, 2))

    def test_permutation_preserves_multiset(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(18, 4, 5))
        out = T.pixel_shuffle(x, 3)
        assert np.array_equal(np.sort(out.ravel()), np.sort(x.ravel()))

    def test_indivisible_channels(self):
        with pytest.raises(ShapeError):
            T.pixel_shuffle(np.zeros((3, 2, 2)), 2)


class TestElementwise:
    def test_softplus_zero(self):
        assert abs(T.softplus(np.array(0.0)) - np.log(2.0)) < 1e-15

    def test_sigmoid_zero(self):
        assert T.sigmoid(np.array(0.0)) == 0.5

    def test_softplus_overflow_safe(self):
        # high-precision reference: log(1+e^50) = 50 + log1p(e^-50)
        ref = 50.0 + np.log1p(np.exp(-50.0))
        assert abs(T.softplus(np.array(50.0)) - ref) < 1e-9
        assert np.isfinite(T.softplus(np.array(800.0)))

    def test_sigmoid_monotone_in_unit_interval(self):
        xs = np.linspace(-30, 30, 201)
        ys = T.sigmoid(xs)
        assert np.all(np.diff(ys) > 0)
        assert np.all((ys > 0) & (ys < 1))

    def test_gelu_antisymmetric_residue(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=100) * 3
        assert np.max(np.abs((T.gelu(x) - T.gelu(-x)) - x)) < 1e-12

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.elementwise_mul(np.zeros(3), np.zeros(4))
        with pytest.raises(ShapeError):
            T.elementwise_add(np.zeros((2, 2)), np.zeros(2))

    def test_binary_scalar_broadcast(self):
        out = T.elementwise_mul(np.array(2.0), np.arange(3.0))
        assert np.array_equal(out, np.array([0.0, 2.0, 4.0]))


class TestLinearityProperties:
    """f(a*x + b*y) == a*f(x) + b*f(y) for the linear operations."""

    @pytest.mark.parametrize("case", ["conv", "convt", "linear", "pool", "shuffle"])
    def test_linearity(self, case):
        rng = np.random.default_rng(hash(case) % 2**32)
        a, b = 1.7, -0.3
        if case == "conv":
            k = rng.normal(size=(2, 3, 3, 3))
            f = lambda z: T.conv2d(z, k, 1, 1)
            shape = (3, 6, 6)
        elif case == "convt":
            k = rng.normal(size=(3, 2, 3, 3))
            f = lambda z: T.conv_transpose2d(z, k, 2, 1)
            shape = (3, 6, 6)
        elif case == "linear":
            w = rng.normal(size=(4, 5))
            f = lambda z: T.linear(z, w)
            shape = (2, 5)
        elif case == "pool":
            f = T.adaptive_avg_pool_1x1
            shape = (3, 4, 4)
        else:
            f = lambda z: T.pixel_shuffle(z, 2)
            shape = (8, 3, 3)
        x = rng.normal(size=shape)
        y = rng.normal(size=shape)
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        scale = max(np.max(np.abs(rhs)), 1.0)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale
