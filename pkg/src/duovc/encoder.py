"""Dual-mode encoder: conv bank -> width-2 max pool -> two conv
projections with a residual -> highway stack -> unidirectional GRU.

Every convolution is a dual-branch block, so the same parameters serve
a causal (streaming) and a non-causal (offline) forward.  The
distillation loss pulls the streaming latent toward a detached copy of
the offline latent, so guidance flows one way only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, ShapeError
from .layers import (
    DualModeConvBlock,
    GruLayer,
    Highway,
    Linear,
    Mode,
    Module,
)
from .rng import Rng
from .tensor import Tensor, add, concat, maximum, shift_rows, smooth_l1, sub, tmean


@dataclass
class EncoderConfig:
    input_dim: int = 8
    bank_kernel_sizes: tuple = tuple(range(1, 9))
    bank_channels: int = 16
    proj_channels: int = 32
    highway_layers: int = 4
    highway_dim: int = 32
    gru_hidden: int = 32
    depthwise_kernel_size: int = 5
    dropout: float = 0.1
    # Open choice: when true the non-streaming mode adds a backward GRU pass
    # (summed into the forward output so both modes keep the same latent dim).
    bidirectional_noncausal_gru: bool = False

    def __post_init__(self):
        sizes = [self.input_dim, self.bank_channels, self.proj_channels,
                 self.highway_layers, self.highway_dim, self.gru_hidden,
                 self.depthwise_kernel_size, *self.bank_kernel_sizes]
        if any(int(s) <= 0 for s in sizes):
            raise ConfigError("all encoder sizes must be positive")
        if len(set(self.bank_kernel_sizes)) != len(self.bank_kernel_sizes):
            raise ConfigError(f"bank kernel sizes must be distinct, got {self.bank_kernel_sizes}")


@dataclass
class EncoderOutput:
    latent: Tensor
    mode: Mode


def pair_max_pool(x: Tensor, mode: Mode, state: dict | None = None, path: str = "") -> Tensor:
    """Width-2 max pool, stride 1.  Streaming pools {t-1, t} (zero pad at
    t=0), non-streaming pools {t, t+1} (zero pad at the end)."""
    if mode is Mode.STREAMING:
        boundary = None
        if state is not None:
            boundary = state.get(f"{path}.prev")
            state[f"{path}.prev"] = np.asarray(x.data[-1:]).copy()
        return maximum(x, shift_rows(x, 1, boundary=boundary))
    return maximum(x, shift_rows(x, -1))


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: Rng):
        self.cfg = cfg
        c = cfg
        self.bank = [DualModeConvBlock(c.input_dim, c.bank_channels, k, c.dropout, rng)
                     for k in c.bank_kernel_sizes]
        bank_out = len(c.bank_kernel_sizes) * c.bank_channels
        self.proj1 = DualModeConvBlock(bank_out, c.proj_channels, c.depthwise_kernel_size,
                                       c.dropout, rng)
        self.proj2 = DualModeConvBlock(c.proj_channels, c.input_dim, c.depthwise_kernel_size,
                                       c.dropout, rng)
        self.pre_highway = Linear(c.input_dim, c.highway_dim, rng)
        self.highways = [Highway(c.highway_dim, rng) for _ in range(c.highway_layers)]
        self.gru = GruLayer(c.highway_dim, c.gru_hidden, rng)
        self.gru_back = (GruLayer(c.highway_dim, c.gru_hidden, rng)
                         if c.bidirectional_noncausal_gru else None)

    def encode(self, features: Tensor, mode: Mode, training: bool = False,
               rng: Rng | None = None, state: dict | None = None) -> EncoderOutput:
        """Map [T, input_dim] features to the [T, gru_hidden] latent.

        ``state`` carries chunk context; the offline call (state=None)
        uses zero left context, which chunked inference reproduces
        exactly.
        """
        if features.data.ndim != 2 or features.shape[1] != self.cfg.input_dim:
            raise ShapeError(f"encoder expects [T, {self.cfg.input_dim}], got {features.shape}")
        outs = [blk(features, mode, training=training, rng=rng, state=state, path=f"enc.bank.{i}")
                for i, blk in enumerate(self.bank)]
        h = concat(outs, axis=1) if len(outs) > 1 else outs[0]
        h = pair_max_pool(h, mode, state=state, path="enc.pool")
        h = self.proj1(h, mode, training=training, rng=rng, state=state, path="enc.proj1")
        h = self.proj2(h, mode, training=training, rng=rng, state=state, path="enc.proj2")
        h = add(h, features)
        h = self.pre_highway(h)
        for hw in self.highways:
            h = hw(h)
        z = self.gru.forward_seq(h, state=state, path="enc.gru")
        if self.gru_back is not None and mode is Mode.NON_STREAMING:
            rev = Tensor.from_op(np.ascontiguousarray(h.data[::-1]), (h,),
                                 _reverse_bwd(h), "reverse_rows")
            zb = self.gru_back.forward_seq(rev)
            z = add(z, Tensor.from_op(np.ascontiguousarray(zb.data[::-1]), (zb,),
                                      _reverse_bwd(zb), "reverse_rows"))
        return EncoderOutput(z, mode)

    def stateful_slots(self) -> dict[str, tuple]:
        """Names and shapes of the chunk-context buffers streaming needs."""
        slots: dict[str, tuple] = {}
        for i, blk in enumerate(self.bank):
            dw = blk.causal_branch.dw
            if dw.left_pad:
                slots[f"enc.bank.{i}.causal.dw"] = (dw.left_pad, dw.channels)
        slots["enc.pool.prev"] = (1, len(self.bank) * self.cfg.bank_channels)
        for name, blk in (("enc.proj1", self.proj1), ("enc.proj2", self.proj2)):
            dw = blk.causal_branch.dw
            if dw.left_pad:
                slots[f"{name}.causal.dw"] = (dw.left_pad, dw.channels)
        slots["enc.gru.h"] = (self.cfg.gru_hidden,)
        return slots

    def flops_per_frame(self, mode: Mode = Mode.STREAMING) -> int:
        total = sum(blk.flops_per_frame() for blk in self.bank)
        bank_out = len(self.bank) * self.cfg.bank_channels
        total += bank_out  # width-2 max pool
        total += self.proj1.flops_per_frame() + self.proj2.flops_per_frame()
        total += self.cfg.input_dim  # residual add
        total += self.pre_highway.flops_per_frame()
        total += sum(hw.flops_per_frame() for hw in self.highways)
        total += self.gru.flops_per_frame()
        if self.gru_back is not None and mode is Mode.NON_STREAMING:
            total += self.gru_back.flops_per_frame()
        return total


def _reverse_bwd(src: Tensor):
    def bwd(out):
        src._accum_grad(out.grad[::-1])
    return bwd


def distillation_loss(z_stream: EncoderOutput, z_nonstream: EncoderOutput) -> Tensor:
    """Mean smooth-L1 between the streaming latent and the detached
    non-streaming latent; no gradient reaches parameters through the
    non-streaming path."""
    if z_stream.mode is not Mode.STREAMING or z_nonstream.mode is not Mode.NON_STREAMING:
        raise ContractError(
            f"distillation needs (streaming, non-streaming), got ({z_stream.mode}, {z_nonstream.mode})")
    if z_stream.latent.shape != z_nonstream.latent.shape:
        raise ContractError(
            f"latent shapes differ: {z_stream.latent.shape} vs {z_nonstream.latent.shape}")
    diff = sub(z_stream.latent, z_nonstream.latent.detach())
    return tmean(smooth_l1(diff))
