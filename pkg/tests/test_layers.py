"""Layer contracts: padding/causality conventions, dual-mode dispatch
and gradient isolation, GRU recurrence identities, dropout behavior."""

import numpy as np
import pytest

from duovc.errors import ConfigError, ContractError, ShapeError
from duovc.layers import (
    BasicConvLayer,
    Conv1d,
    DepthwiseConv1d,
    DualModeConvBlock,
    GruLayer,
    Highway,
    LayerNorm,
    Linear,
    Mode,
    dropout,
)
from duovc.rng import Rng
from duovc.tensor import Tensor, no_grad, tsum


def _ramp():
    return Tensor(np.array([[1.0], [2.0], [3.0], [4.0]], dtype=np.float32))


class TestConv1d:
    def set_taps(self, conv, taps):
        conv.weight.assign(np.array([[taps]], dtype=np.float32))
        conv.bias.assign(np.zeros(1, dtype=np.float32))

    def test_causal_identity_tap(self):
        conv = Conv1d(1, 1, 3, causal=True, rng=Rng(0))
        self.set_taps(conv, [0, 0, 1])
        np.testing.assert_array_equal(conv(_ramp()).data.ravel(), [1, 2, 3, 4])

    def test_causal_lag2_tap_forces_left_padding(self):
        conv = Conv1d(1, 1, 3, causal=True, rng=Rng(0))
        self.set_taps(conv, [1, 0, 0])
        np.testing.assert_array_equal(conv(_ramp()).data.ravel(), [0, 0, 1, 2])

    def test_noncausal_lookahead_tap_forces_right_padding(self):
        conv = Conv1d(1, 1, 3, causal=False, rng=Rng(0))
        self.set_taps(conv, [0, 0, 1])
        np.testing.assert_array_equal(conv(_ramp()).data.ravel(), [2, 3, 4, 0])

    def test_noncausal_padding_split_is_left_heavy(self):
        # k=4: ceil(3/2)=2 left, 1 right
        conv = Conv1d(1, 1, 4, causal=False, rng=Rng(0))
        assert conv.left_pad == 2
        conv.weight.assign(np.array([[[1, 0, 0, 0]]], dtype=np.float32))
        conv.bias.assign(np.zeros(1, dtype=np.float32))
        np.testing.assert_array_equal(conv(_ramp()).data.ravel(), [0, 0, 1, 2])

    def test_length_preserved_for_all_kernels(self):
        x = Tensor(Rng(1).normal((9, 3)))
        for k in (1, 2, 3, 5, 8):
            for causal in (True, False):
                out = Conv1d(3, 4, k, causal, Rng(2))(x)
                assert out.shape == (9, 4)

    def test_channel_mismatch_raises(self):
        conv = Conv1d(3, 4, 3, causal=True, rng=Rng(0))
        with pytest.raises(ShapeError):
            conv(Tensor(Rng(1).normal((5, 2))))

    def test_causality_perturbation(self):
        conv = Conv1d(2, 3, 5, causal=True, rng=Rng(4))
        x = Rng(5).normal((12, 2))
        base = conv(Tensor(x)).data
        x2 = x.copy()
        x2[7] += 1.0
        moved = conv(Tensor(x2)).data
        assert np.array_equal(base[:7], moved[:7])
        assert not np.array_equal(base[7:], moved[7:])


class TestDepthwise:
    def test_per_channel_filters(self):
        conv = DepthwiseConv1d(2, 2, causal=True, rng=Rng(0))
        conv.weight.assign(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.float32))
        conv.bias.assign(np.zeros(2, dtype=np.float32))
        x = Tensor(np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]], dtype=np.float32))
        out = conv(x).data
        # channel 0 keeps current frame, channel 1 is the t-1 tap
        np.testing.assert_array_equal(out[:, 0], [1, 2, 3])
        np.testing.assert_array_equal(out[:, 1], [0, 10, 20])


class TestBasicConvLayer:
    def test_all_zero_weights_give_zero_output(self):
        layer = BasicConvLayer(3, 4, 3, causal=True, dropout_rate=0.0, rng=Rng(1))
        for _, p in layer.named_parameters():
            p.assign(np.zeros_like(p.data))
        out = layer(Tensor(Rng(2).normal((6, 3))))
        np.testing.assert_array_equal(out.data, np.zeros((6, 4), dtype=np.float32))

    def test_dropout_zero_training_equals_inference(self):
        layer = BasicConvLayer(3, 4, 3, causal=True, dropout_rate=0.0, rng=Rng(3))
        x = Tensor(Rng(4).normal((6, 3)))
        train_out = layer(x, training=True, rng=Rng(5))
        infer_out = layer(x, training=False)
        assert np.array_equal(train_out.data, infer_out.data)

    def test_causal_layer_is_causal_bitwise(self):
        layer = BasicConvLayer(3, 5, 5, causal=True, dropout_rate=0.0, rng=Rng(6))
        x = Rng(7).normal((15, 3))
        base = layer(Tensor(x)).data
        x2 = x.copy()
        x2[10] += 0.5
        moved = layer(Tensor(x2)).data
        assert np.array_equal(base[:10], moved[:10])

    def test_dropout_rate_validated(self):
        with pytest.raises(ConfigError):
            BasicConvLayer(2, 2, 3, causal=True, dropout_rate=1.0, rng=Rng(0))


class TestDualMode:
    def test_dispatch_matches_selected_branch(self):
        block = DualModeConvBlock(3, 4, 3, 0.0, Rng(8))
        x = Tensor(Rng(9).normal((7, 3)))
        np.testing.assert_array_equal(block(x, Mode.STREAMING).data,
                                      block.causal_branch(x).data)
        np.testing.assert_array_equal(block(x, Mode.NON_STREAMING).data,
                                      block.noncausal_branch(x).data)

    def test_branches_have_independent_parameters(self):
        block = DualModeConvBlock(3, 4, 3, 0.0, Rng(10))
        causal = {n for n, _ in block.causal_branch.named_parameters()}
        noncausal = {n for n, _ in block.noncausal_branch.named_parameters()}
        assert causal == noncausal  # same structure
        assert not np.array_equal(block.causal_branch.pw_in.weight.data,
                                  block.noncausal_branch.pw_in.weight.data)

    def test_unselected_branch_gets_no_gradient(self):
        block = DualModeConvBlock(3, 4, 3, 0.0, Rng(11))
        x = Tensor(Rng(12).normal((6, 3)), requires_grad=True)
        tsum(block(x, Mode.STREAMING)).backward()
        for name, p in block.named_parameters():
            if name.startswith("noncausal"):
                assert p.grad is None, name
            else:
                assert p.grad is not None, name


class TestGru:
    def test_zero_weights_halve_previous_hidden(self):
        # update gate sigmoid(0)=0.5, candidate tanh(0)=0
        gru = GruLayer(1, 1, Rng(0))
        for p in gru.parameters():
            p.assign(np.zeros_like(p.data))
        h = gru.step(Tensor(np.array([0.7], dtype=np.float32)), np.array([1.0], dtype=np.float32))
        np.testing.assert_allclose(h.data.ravel(), [0.5])

    def test_zero_everything_stays_zero(self):
        gru = GruLayer(2, 3, Rng(1))
        for p in gru.parameters():
            p.assign(np.zeros_like(p.data))
        h = gru.step(Tensor(np.zeros(2, dtype=np.float32)), np.zeros(3, dtype=np.float32))
        np.testing.assert_array_equal(h.data.ravel(), np.zeros(3))

    def test_fold_of_steps_equals_sequence_forward_bitwise(self):
        gru = GruLayer(3, 4, Rng(2))
        x = Rng(3).normal((6, 3))
        seq = gru.forward_seq(Tensor(x)).data
        h = np.zeros(4, dtype=np.float32)
        for t in range(6):
            h = gru.step(Tensor(x[t]), h).data[0].copy()
            assert np.array_equal(h, seq[t])

    def test_unidirectional(self):
        gru = GruLayer(2, 3, Rng(4))
        x = Rng(5).normal((8, 2))
        base = gru.forward_seq(Tensor(x)).data
        x2 = x.copy()
        x2[5] += 1.0
        moved = gru.forward_seq(Tensor(x2)).data
        assert np.array_equal(base[:5], moved[:5])
        assert not np.array_equal(base[5:], moved[5:])

    def test_dim_mismatch_raises(self):
        gru = GruLayer(3, 4, Rng(6))
        with pytest.raises(ShapeError):
            gru.forward_seq(Tensor(Rng(7).normal((5, 2))))
        with pytest.raises(ShapeError):
            gru.step(Tensor(np.zeros(3, dtype=np.float32)), np.zeros(5, dtype=np.float32))


class TestDropout:
    def test_identity_in_inference(self):
        x = Tensor(Rng(1).normal((4, 4)))
        assert dropout(x, 0.5, training=False, rng=None) is x

    def test_inverted_scaling_preserves_mean(self):
        x = Tensor(np.ones((500, 20), dtype=np.float32))
        out = dropout(x, 0.25, training=True, rng=Rng(2))
        kept = out.data[out.data != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75)
        assert abs(out.data.mean() - 1.0) < 0.05

    def test_rate_validation(self):
        x = Tensor(np.ones(3, dtype=np.float32))
        with pytest.raises(ConfigError):
            dropout(x, 1.0, training=True, rng=Rng(0))

    def test_needs_rng_when_training(self):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(3, dtype=np.float32)), 0.5, training=True, rng=None)


def test_layernorm_per_frame_statistics():
    norm = LayerNorm(6)
    x = Rng(8).normal((10, 6)) * 3.0 + 1.0
    out = norm(Tensor(x)).data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.std(axis=1), 1.0, atol=1e-2)


def test_highway_gate_closed_is_identity():
    hw = Highway(4, Rng(9))
    hw.lin_t.weight.assign(np.zeros((4, 4), dtype=np.float32))
    hw.lin_t.bias.assign(np.full(4, -40.0, dtype=np.float32))  # gate ~ 0
    x = Tensor(Rng(10).normal((5, 4)))
    np.testing.assert_allclose(hw(x).data, x.data, atol=1e-6)


def test_linear_bias_and_shape_check():
    lin = Linear(3, 2, Rng(11))
    lin.weight.assign(np.zeros((3, 2), dtype=np.float32))
    lin.bias.assign(np.array([1.5, -2.0], dtype=np.float32))
    out = lin(Tensor(Rng(12).normal((4, 3))))
    np.testing.assert_array_equal(out.data, np.tile([1.5, -2.0], (4, 1)))
    with pytest.raises(ShapeError):
        lin(Tensor(Rng(13).normal((4, 5))))


def test_stateful_forward_rejected_under_grad():
    layer = BasicConvLayer(2, 3, 3, causal=True, dropout_rate=0.0, rng=Rng(14))
    x = Tensor(Rng(15).normal((4, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        layer(x, state={}, path="p")
    with no_grad():
        layer(x, state={}, path="p")  # fine in inference
