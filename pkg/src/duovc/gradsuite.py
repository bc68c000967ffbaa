"""Named finite-difference checks for every layer and loss.

Shared by ``duovc gradcheck`` and the test suite.  Fixtures are tiny
and deterministic; parameters are randomized away from activation
kinks before checking.
"""

from __future__ import annotations

import numpy as np

from .decoder import Decoder, DecoderConfig
from .encoder import Encoder, EncoderConfig, EncoderOutput, distillation_loss
from .gradcheck import grad_check, probe_scalar, randomize_parameters
from .hpc import ApcHead, CpcHead, HpcConfig
from .layers import (
    BasicConvLayer,
    Conv1d,
    DepthwiseConv1d,
    DualModeConvBlock,
    GruLayer,
    Highway,
    LayerNorm,
    Linear,
    Mode,
)
from .model import ConversionModel, ModelConfig
from .rng import Rng
from .tensor import Tensor, add
from .training import reconstruction_loss

TOLERANCE = 1e-4


def _module_op(module, forward):
    """Build (op, inputs) so grad_check perturbs the input and every parameter."""
    names = [n for n, _ in module.named_parameters()]

    def op(x, *params):
        module.replace_parameters(dict(zip(names, params)))
        return forward(module, x)

    return op, [p for _, p in module.named_parameters()]


def _checked(module, x: Tensor, forward) -> float:
    op, params = _module_op(module, forward)
    return grad_check(op, [x] + params)


def check_conv1d_causal() -> float:
    conv = Conv1d(3, 4, 3, causal=True, rng=Rng(10))
    randomize_parameters(conv, Rng(11))
    return _checked(conv, Tensor(Rng(12).normal((6, 3))), lambda m, x: probe_scalar(m(x)))


def check_conv1d_noncausal() -> float:
    conv = Conv1d(3, 4, 4, causal=False, rng=Rng(20))
    randomize_parameters(conv, Rng(21))
    return _checked(conv, Tensor(Rng(22).normal((6, 3))), lambda m, x: probe_scalar(m(x)))


def check_depthwise_conv() -> float:
    conv = DepthwiseConv1d(4, 5, causal=True, rng=Rng(30))
    randomize_parameters(conv, Rng(31))
    return _checked(conv, Tensor(Rng(32).normal((7, 4))), lambda m, x: probe_scalar(m(x)))


def check_linear() -> float:
    lin = Linear(4, 3, Rng(40))
    randomize_parameters(lin, Rng(41))
    return _checked(lin, Tensor(Rng(42).normal((5, 4))), lambda m, x: probe_scalar(m(x)))


def check_layer_norm() -> float:
    norm = LayerNorm(5)
    randomize_parameters(norm, Rng(51))
    return _checked(norm, Tensor(Rng(52).normal((4, 5))), lambda m, x: probe_scalar(m(x)))


def check_highway() -> float:
    hw = Highway(4, Rng(60))
    randomize_parameters(hw, Rng(61))
    return _checked(hw, Tensor(Rng(62).normal((5, 4))), lambda m, x: probe_scalar(m(x)))


def check_basic_conv_layer() -> float:
    layer = BasicConvLayer(3, 4, 3, causal=True, dropout_rate=0.0, rng=Rng(70))
    randomize_parameters(layer, Rng(71))
    return _checked(layer, Tensor(Rng(72).normal((6, 3))), lambda m, x: probe_scalar(m(x)))


def check_dual_mode_block() -> float:
    block = DualModeConvBlock(3, 4, 3, 0.0, Rng(80))
    randomize_parameters(block, Rng(81))
    x = Tensor(Rng(82).normal((6, 3)))
    err_s = _checked(block, x, lambda m, v: probe_scalar(m(v, Mode.STREAMING)))
    err_ns = _checked(block, x, lambda m, v: probe_scalar(m(v, Mode.NON_STREAMING)))
    return max(err_s, err_ns)


def check_gru() -> float:
    gru = GruLayer(3, 4, Rng(90))
    randomize_parameters(gru, Rng(91))
    return _checked(gru, Tensor(Rng(92).normal((6, 3))), lambda m, x: probe_scalar(m(x)))


def _tiny_encoder() -> Encoder:
    cfg = EncoderConfig(input_dim=3, bank_kernel_sizes=(1, 2), bank_channels=3,
                        proj_channels=4, highway_layers=1, highway_dim=4,
                        gru_hidden=4, depthwise_kernel_size=3, dropout=0.0)
    enc = Encoder(cfg, Rng(100))
    randomize_parameters(enc, Rng(101))
    return enc


def check_encoder() -> float:
    enc = _tiny_encoder()
    x = Tensor(Rng(102).normal((8, 3)))
    err_s = _checked(enc, x, lambda m, v: probe_scalar(m.encode(v, Mode.STREAMING).latent))
    err_ns = _checked(enc, x, lambda m, v: probe_scalar(m.encode(v, Mode.NON_STREAMING).latent))
    return max(err_s, err_ns)


def check_loss_distillation() -> float:
    """The teacher latent is held at its base value: detach means the
    gradient treats it as a constant, so the finite-difference oracle
    must too (the zero-gradient property of the live teacher path is
    asserted separately)."""
    enc = _tiny_encoder()
    x = Tensor(Rng(103).normal((8, 3)))
    teacher = enc.encode(x, Mode.NON_STREAMING).latent.data.copy()

    def forward(m, v):
        frozen = EncoderOutput(Tensor(teacher, dtype=v.data.dtype), Mode.NON_STREAMING)
        return distillation_loss(m.encode(v, Mode.STREAMING), frozen)

    return _checked(enc, x, forward)


def check_loss_cpc() -> float:
    head = CpcHead(4, HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=4), Rng(110))
    randomize_parameters(head, Rng(111))
    return _checked(head, Tensor(Rng(112).normal((8, 4))),
                    lambda m, z: m.loss(z, Rng(113)))


def check_loss_apc() -> float:
    # detach_targets off so the loss is differentiable end to end; the
    # target-detach knob is covered by a semantic (zero-gradient) test.
    head = ApcHead(4, HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=4,
                                detach_targets=False), Rng(120))
    randomize_parameters(head, Rng(121))
    return _checked(head, Tensor(Rng(122).normal((8, 4))), lambda m, z: m.loss(z))


def check_loss_reconstruction() -> float:
    target = Rng(130).normal((5, 3)).astype(np.float64)

    def op(pred):
        return reconstruction_loss(target, pred)

    return grad_check(op, [Tensor(Rng(131).normal((5, 3)))])


def check_decoder_teacher_forced() -> float:
    cfg = DecoderConfig(latent_dim=4, speaker_dim=3, output_dim=3, prenet_dims=(6, 5),
                        conv_channels=4, conv_blocks=1, depthwise_kernel_size=3,
                        gru_hidden=4, dropout=0.0, ar_input_noise_std=1.0)
    dec = Decoder(cfg, Rng(140))
    randomize_parameters(dec, Rng(141))
    latents = Tensor(Rng(142).normal((6, 4)))
    spk = Tensor(Rng(143).normal((1, 3)))
    targets = Rng(144).normal((6, 3)).astype(np.float64)

    names = [n for n, _ in dec.named_parameters()]

    def op(lat, s, *params):
        dec.replace_parameters(dict(zip(names, params)))
        y = dec.decode_teacher_forced(lat, s, targets.astype(lat.data.dtype), Rng(145),
                                      cfg.ar_input_noise_std, Mode.STREAMING, training=False)
        return probe_scalar(y)

    return grad_check(op, [latents, spk] + [p for _, p in dec.named_parameters()])


def check_loss_composite() -> float:
    """Full training objective (distill + both-mode hpc + both-mode rec)
    on an 8-frame input, every model parameter checked.  The
    distillation teacher is held at its base value and the regression
    targets flow gradient, matching what detach makes constant."""
    cfg = ModelConfig(
        input_dim=3, output_dim=3, n_speakers=2, speaker_dim=2, seed=150,
        encoder=EncoderConfig(input_dim=3, bank_kernel_sizes=(1, 2), bank_channels=2,
                              proj_channels=3, highway_layers=1, highway_dim=3,
                              gru_hidden=3, depthwise_kernel_size=3, dropout=0.0),
        decoder=DecoderConfig(latent_dim=3, speaker_dim=2, output_dim=3, prenet_dims=(4, 3),
                              conv_channels=3, conv_blocks=1, depthwise_kernel_size=3,
                              gru_hidden=3, dropout=0.0, ar_input_noise_std=1.0),
        hpc=HpcConfig(prediction_steps=2, negatives=3, gnet_hidden=3, detach_targets=False))
    model = ConversionModel(cfg)
    randomize_parameters(model, Rng(151))
    bnf = Tensor(Rng(152).normal((8, 3)))
    targets = Rng(153).normal((8, 3)).astype(np.float64)
    names = [n for n, _ in model.named_parameters()]
    teacher = model.encode(bnf, Mode.NON_STREAMING).latent.data.copy()

    def op(x, *params):
        model.replace_parameters(dict(zip(names, params)))
        spk = model.speakers.lookup(1)
        z_ns = model.encode(x, Mode.NON_STREAMING)
        y_ns = model.decoder.decode_teacher_forced(z_ns.latent, spk,
                                                   targets.astype(x.data.dtype), Rng(154),
                                                   1.0, Mode.NON_STREAMING, training=False)
        z_s = model.encode(x, Mode.STREAMING)
        y_s = model.decoder.decode_teacher_forced(z_s.latent, spk,
                                                  targets.astype(x.data.dtype), Rng(155),
                                                  1.0, Mode.STREAMING, training=False)
        frozen = EncoderOutput(Tensor(teacher, dtype=x.data.dtype), Mode.NON_STREAMING)
        total = distillation_loss(z_s, frozen)
        total = add(total, model.hpc.loss(z_s.latent, Rng(156)))
        total = add(total, model.hpc.loss(z_ns.latent, Rng(157)))
        total = add(total, reconstruction_loss(targets, y_s))
        total = add(total, reconstruction_loss(targets, y_ns))
        return total

    return grad_check(op, [bnf] + [p for _, p in model.named_parameters()])


CHECKS = [
    ("conv1d_causal", check_conv1d_causal),
    ("conv1d_noncausal", check_conv1d_noncausal),
    ("depthwise_conv", check_depthwise_conv),
    ("linear", check_linear),
    ("layer_norm", check_layer_norm),
    ("highway", check_highway),
    ("basic_conv_layer", check_basic_conv_layer),
    ("dual_mode_block", check_dual_mode_block),
    ("gru", check_gru),
    ("encoder", check_encoder),
    ("decoder_teacher_forced", check_decoder_teacher_forced),
    ("loss_distillation", check_loss_distillation),
    ("loss_cpc", check_loss_cpc),
    ("loss_apc", check_loss_apc),
    ("loss_reconstruction", check_loss_reconstruction),
    ("loss_composite", check_loss_composite),
]


def run_suite(emit=print, tolerance: float = TOLERANCE) -> bool:
    ok = True
    for name, fn in CHECKS:
        err = fn()
        passed = err < tolerance
        ok = ok and passed
        emit(f"{'PASS' if passed else 'FAIL'} {name}: max relative error {err:.3e} "
             f"(tolerance {tolerance:g})")
    return ok
