import numpy as np
import pytest

from burstsr import tensor_ops as T
from burstsr.errors import ShapeError
from burstsr.msfm import MsfmWeights, conv_branch, msfm_forward, ssm_branch, transformer_branch
from burstsr.ssm import SsmParams, closed_form_scan

from oracles import channel_attention_loop_scores


def make_weights(rng, c_feat=4, d_state=3):
    return MsfmWeights.random(rng, c_feat, d_state)


class TestConvBranch:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        w = MsfmWeights.zeros(3, 2)
        for c in range(3):
            w.conv_kernel[c, c, 1, 1] = 1.0
        x = rng.normal(size=(3, 5, 5))
        assert np.allclose(conv_branch(x, w), x, rtol=0, atol=0)

    def test_zero_kernel(self):
        w = MsfmWeights.zeros(3, 2)
        assert np.all(conv_branch(np.ones((3, 4, 4)), w) == 0)

    def test_matches_tensor_core(self):
        rng = np.random.default_rng(1)
        w = make_weights(rng)
        x = rng.normal(size=(4, 6, 7))
        want = T.conv2d(x, w.conv_kernel, stride=1, padding=1)
        assert np.max(np.abs(conv_branch(x, w) - want)) < 1e-12
        assert conv_branch(x, w).shape == x.shape


class TestSsmBranch:
    def test_zero_input(self):
        w = make_weights(np.random.default_rng(2))
        assert np.all(ssm_branch(np.zeros((4, 3, 5)), w) == 0)

    def test_single_row_structure(self):
        # one row: horizontal part is a single 1-D scan; vertical part is a
        # length-1 scan per column, i.e. y = C.(Bbar*x) + D*x tokenwise
        rng = np.random.default_rng(3)
        w = make_weights(rng)
        x = rng.normal(size=(4, 1, 9))
        got = ssm_branch(x, w)

        tokens = x[:, 0, :].T
        delta = T.softplus(T.linear(tokens, w.delta_weight, w.delta_bias))
        b_seq = T.linear(tokens, w.b_weight, w.b_bias).reshape(9, 4, 3)
        params = SsmParams(A=w.a_diag, B_seq=b_seq, C_out=w.c_readout, D_skip=w.d_skip, Delta_seq=delta)
        horiz = closed_form_scan(params, tokens)

        vert = np.empty_like(tokens)
        for j in range(9):
            p1 = SsmParams(
                A=w.a_diag,
                B_seq=b_seq[j : j + 1],
                C_out=w.c_readout,
                D_skip=w.d_skip,
                Delta_seq=delta[j : j + 1],
            )
            vert[j] = closed_form_scan(p1, tokens[j : j + 1])[0]

        want = (horiz + vert).T[:, None, :]
        scale = max(np.max(np.abs(want)), 1.0)
        assert np.max(np.abs(got - want)) / scale <= 1e-10

    def test_matches_closed_form_composition(self):
        rng = np.random.default_rng(4)
        w = make_weights(rng)
        x = rng.normal(size=(4, 4, 4))
        got = ssm_branch(x, w)

        def scan_rows(img):
            out = np.empty_like(img)
            for r in range(img.shape[1]):
                tokens = img[:, r, :].T
                delta = T.softplus(T.linear(tokens, w.delta_weight, w.delta_bias))
                b_seq = T.linear(tokens, w.b_weight, w.b_bias).reshape(tokens.shape[0], 4, 3)
                p = SsmParams(A=w.a_diag, B_seq=b_seq, C_out=w.c_readout, D_skip=w.d_skip, Delta_seq=delta)
                out[:, r, :] = closed_form_scan(p, tokens).T
            return out

        want = scan_rows(x) + scan_rows(x.transpose(0, 2, 1)).transpose(0, 2, 1)
        scale = max(np.max(np.abs(want)), 1.0)
        assert np.max(np.abs(got - want)) / scale <= 1e-10


class TestTransformerBranch:
    def test_zero_value_projection(self):
        rng = np.random.default_rng(5)
        w = make_weights(rng)
        w.attn_wv[:] = 0.0
        assert np.all(transformer_branch(rng.normal(size=(4, 3, 3)), w) == 0)

    def test_single_channel_degenerate_softmax(self):
        rng = np.random.default_rng(6)
        w = make_weights(rng, c_feat=1, d_state=2)
        x = rng.normal(size=(1, 4, 5))
        got = transformer_branch(x, w)
        want = (w.attn_wo @ (w.attn_wv @ x.reshape(1, 20))).reshape(1, 4, 5)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        w = make_weights(rng)
        x = rng.normal(size=(4, 3, 4))
        flat = x.reshape(4, 12)
        q, k, v = w.attn_wq @ flat, w.attn_wk @ flat, w.attn_wv @ flat
        attn = channel_attention_loop_scores(q, k, 1.0 / np.sqrt(12))
        want = (w.attn_wo @ (attn @ v)).reshape(4, 3, 4)
        got = transformer_branch(x, w)
        scale = max(np.max(np.abs(want)), 1.0)
        assert np.max(np.abs(got - want)) / scale <= 1e-10


class TestMsfmForward:
    def test_conv_only_gating(self):
        rng = np.random.default_rng(8)
        w = make_weights(rng)
        w.w1, w.w2, w.w3 = 1.0, 0.0, 0.0
        x = rng.normal(size=(4, 5, 5))
        assert np.array_equal(msfm_forward(x, w), conv_branch(x, w))

    def test_all_zero_weights(self):
        rng = np.random.default_rng(9)
        w = make_weights(rng)
        w.w1 = w.w2 = w.w3 = 0.0
        assert np.all(msfm_forward(rng.normal(size=(4, 4, 4)), w) == 0)

    def test_recomposed_sum_bitwise(self):
        rng = np.random.default_rng(10)
        w = make_weights(rng)
        w.w1, w.w2, w.w3 = 0.7, -1.3, 2.1
        x = rng.normal(size=(4, 5, 6))
        want = w.w1 * conv_branch(x, w) + w.w2 * ssm_branch(x, w) + w.w3 * transformer_branch(x, w)
        assert np.array_equal(msfm_forward(x, w), want)

    @pytest.mark.parametrize("zeroed", [(0,), (1,), (2,), (0, 2), (1, 2), (0, 1, 2)])
    def test_branch_gating_subsets_bitwise(self, zeroed):
        rng = np.random.default_rng(11)
        w = make_weights(rng)
        ws = [0.9, 1.1, -0.4]
        for i in zeroed:
            ws[i] = 0.0
        w.w1, w.w2, w.w3 = ws
        x = rng.normal(size=(4, 4, 5))
        want = ws[0] * conv_branch(x, w) + ws[1] * ssm_branch(x, w) + ws[2] * transformer_branch(x, w)
        assert np.array_equal(msfm_forward(x, w), want)

    @pytest.mark.parametrize("alpha", [2.0, 0.5, 8.0])
    def test_homogeneity_power_of_two(self, alpha):
        rng = np.random.default_rng(12)
        w = make_weights(rng)
        w.w1, w.w2, w.w3 = 0.3, 1.7, -0.9
        x = rng.normal(size=(4, 4, 4))
        y = msfm_forward(x, w)
        w.w1, w.w2, w.w3 = alpha * 0.3, alpha * 1.7, alpha * -0.9
        assert np.array_equal(msfm_forward(x, w), alpha * y)

    def test_shape_preserved(self):
        rng = np.random.default_rng(13)
        w = make_weights(rng)
        for shape in [(4, 1, 7), (4, 6, 1), (4, 3, 8)]:
            x = rng.normal(size=shape)
            assert msfm_forward(x, w).shape == shape

    def test_bad_input_shape(self):
        w = make_weights(np.random.default_rng(14))
        with pytest.raises(ShapeError):
            ssm_branch(np.zeros((4, 4)), w)
        with pytest.raises(ShapeError):
            transformer_branch(np.zeros((4, 4)), w)


def test_flat_roundtrip():
    rng = np.random.default_rng(15)
    w = make_weights(rng)
    w.w2 = 0.25
    flat = w.to_flat("msfm.0")
    back = MsfmWeights.from_flat(flat, "msfm.0")
    for name, arr in flat.items():
        field = name.split(".")[-1]
        assert np.array_equal(np.asarray(getattr(back, field), dtype=np.float64), arr)
