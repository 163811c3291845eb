import numpy as np
import pytest

from burstsr import tensor_ops as T
from burstsr.adaup import (
    AdaUpStage,
    AdaUpWeights,
    adaup_forward,
    baseline_upsample,
    channel_interact,
    modulate_kernel,
    perceive_distribution,
    transposed_conv_x2,
    upsample_stage,
)
from burstsr.errors import ShapeError, ValidationError

from oracles import bilinear_1d_halfpixel


class TestPerceive:
    def test_constant(self):
        x = np.full((3, 4, 5), 1.25)
        assert np.allclose(perceive_distribution(x), 1.25, rtol=0, atol=0)

    def test_mean(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert perceive_distribution(x)[0, 0, 0] == 2.5


class TestChannelInteract:
    def test_identity(self):
        rng = np.random.default_rng(0)
        l = rng.normal(size=(4, 1, 1))
        assert np.array_equal(channel_interact(l, np.eye(4)), l)

    def test_zero(self):
        assert np.all(channel_interact(np.ones((4, 1, 1)), np.zeros((3, 4))) == 0)

    def test_matches_linear_oracle(self):
        rng = np.random.default_rng(1)
        l = rng.normal(size=(5, 1, 1))
        proj = rng.normal(size=(3, 5))
        want = T.linear(l[:, 0, 0], proj)
        assert np.max(np.abs(channel_interact(l, proj)[:, 0, 0] - want)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            channel_interact(np.ones((4, 1, 1)), np.zeros((3, 5)))


class TestModulateKernel:
    def test_ones_identity(self):
        rng = np.random.default_rng(2)
        k = rng.normal(size=(3, 4, 3, 3))
        out = modulate_kernel(k, np.ones(3), np.ones(4))
        assert np.array_equal(out, k)

    def test_bilinearity(self):
        rng = np.random.default_rng(3)
        k = rng.normal(size=(3, 4, 3, 3))
        l = rng.normal(size=3)
        l1 = rng.normal(size=4)
        assert np.array_equal(modulate_kernel(k, 2.0 * l, l1), 2.0 * modulate_kernel(k, l, l1))

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(4)
        k = rng.normal(size=(2, 3, 3, 3))
        l = rng.normal(size=2)
        l1 = rng.normal(size=3)
        got = modulate_kernel(k, l, l1)
        for i in range(2):
            for o in range(3):
                assert np.array_equal(got[i, o], k[i, o] * l[i] * l1[o])


class TestStages:
    def test_single_stage_matches_composition(self):
        rng = np.random.default_rng(5)
        stage = AdaUpStage(kernel=rng.normal(size=(3, 4, 3, 3)), l1_proj=rng.normal(size=(4, 3)))
        x = rng.normal(size=(3, 5, 6))
        got = upsample_stage(x, stage)
        l = perceive_distribution(x)
        l1 = channel_interact(l, stage.l1_proj)
        wf = modulate_kernel(stage.kernel, l, l1)
        want = T.conv_transpose2d(x, wf, stride=2, padding=0)[:, 1:, 1:]
        assert np.array_equal(got, want)
        assert got.shape == (4, 10, 12)

    def test_identity_reduction(self):
        rng = np.random.default_rng(6)
        weights = AdaUpWeights.random(rng, 3, 2)
        x = rng.normal(size=(3, 4, 4))
        got = adaup_forward(x, weights, 4, override="ones")
        plain = transposed_conv_x2(transposed_conv_x2(x, weights.stages[0].kernel), weights.stages[1].kernel)
        assert np.max(np.abs(got - plain)) <= 1e-12
        assert got.shape == (3, 16, 16)

    def test_zero_input_self_consistency(self):
        rng = np.random.default_rng(7)
        weights = AdaUpWeights.random(rng, 3, 1)
        x = np.zeros((3, 4, 4))
        assert np.all(perceive_distribution(x) == 0)
        assert np.all(modulate_kernel(weights.stages[0].kernel, perceive_distribution(x), np.zeros(3)) == 0)
        assert np.all(adaup_forward(x, weights, 2) == 0)

    def test_scale_must_be_power_of_two(self):
        weights = AdaUpWeights.random(np.random.default_rng(8), 3, 2)
        with pytest.raises(ValidationError):
            adaup_forward(np.zeros((3, 4, 4)), weights, 3)

    def test_stage_count_mismatch(self):
        weights = AdaUpWeights.random(np.random.default_rng(9), 3, 1)
        with pytest.raises(ShapeError):
            adaup_forward(np.zeros((3, 4, 4)), weights, 4)

    @pytest.mark.parametrize("h,w", [(1, 1), (1, 5), (7, 2), (16, 16), (64, 3)])
    def test_exact_doubling(self, h, w):
        rng = np.random.default_rng(10 + h * 67 + w)
        weights = AdaUpWeights.random(rng, 2, 1)
        out = adaup_forward(rng.normal(size=(2, h, w)), weights, 2)
        assert out.shape == (2, 2 * h, 2 * w)

    def test_linear_in_input_with_fixed_descriptors(self):
        rng = np.random.default_rng(11)
        weights = AdaUpWeights.random(rng, 3, 2)
        ov = [
            (rng.normal(size=(3, 1, 1)), rng.normal(size=(3, 1, 1))),
            (rng.normal(size=(3, 1, 1)), rng.normal(size=(3, 1, 1))),
        ]
        x = rng.normal(size=(3, 4, 4))
        y = rng.normal(size=(3, 4, 4))
        a, b = 1.5, -0.25
        lhs = adaup_forward(a * x + b * y, weights, 4, override=ov)
        rhs = a * adaup_forward(x, weights, 4, override=ov) + b * adaup_forward(y, weights, 4, override=ov)
        scale = max(np.max(np.abs(rhs)), 1.0)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


class TestBaselines:
    def test_bilinear_constant(self):
        x = np.full((2, 3, 3), 0.7)
        out = baseline_upsample(x, "bilinear", 4)
        assert out.shape == (2, 12, 12)
        assert np.allclose(out, 0.7, rtol=0, atol=1e-15)

    def test_bilinear_halfpixel_positions(self):
        # frozen from the closed-form half-pixel sample positions
        row = np.array([0.0, 1.0])
        want = bilinear_1d_halfpixel(row, 2)
        assert np.array_equal(want, np.array([0.0, 0.25, 0.75, 1.0]))
        out = baseline_upsample(row[None, None, :], "bilinear", 2)
        assert np.allclose(out[0, :, :], np.tile(want, (2, 1)), rtol=0, atol=1e-15)

    def test_bilinear_matches_1d_oracle_rows(self):
        rng = np.random.default_rng(12)
        row = rng.normal(size=7)
        want = bilinear_1d_halfpixel(row, 3)
        out = baseline_upsample(row[None, None, :], "bilinear", 3)
        assert np.max(np.abs(out[0, 1, :] - want)) < 1e-12

    def test_pixel_shuffle_conv_identity_arrangement(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(8, 3, 3))
        got = baseline_upsample(x, "pixel_shuffle_conv", 2)
        assert np.array_equal(got, T.pixel_shuffle(x, 2))

    def test_pixel_shuffle_conv_with_kernel(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(3, 4, 4))
        kernel = rng.normal(size=(12, 3, 3, 3))
        got = baseline_upsample(x, "pixel_shuffle_conv", 2, conv_kernel=kernel)
        want = T.pixel_shuffle(T.conv2d(x, kernel, 1, 1), 2)
        assert np.array_equal(got, want)

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            baseline_upsample(np.zeros((1, 2, 2)), "nearest", 2)
