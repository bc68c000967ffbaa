"""Autoregressive dual-mode decoder.

Each output frame is produced from prenet(previous output frame) ++
latent ++ speaker embedding, passed through a dual-mode conv stack, a
GRU, and a linear head.  Training runs teacher-forced over the whole
sequence with Gaussian noise on the fed-back frames; inference
(free-running or chunked) feeds back generated frames one step at a
time.  In step mode the non-causal branch sees zeros for future taps,
i.e. every frame is treated as the current end of the sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import DualModeConvBlock, GruLayer, Linear, Mode, Module
from .rng import Rng
from .tensor import Tensor, concat, no_grad, relu


@dataclass
class DecoderConfig:
    latent_dim: int = 32
    speaker_dim: int = 16
    output_dim: int = 16
    prenet_dims: tuple = (128, 64)
    conv_channels: int = 32
    conv_blocks: int = 2
    depthwise_kernel_size: int = 5
    gru_hidden: int = 32
    dropout: float = 0.1
    ar_input_noise_std: float = 1.0
    grad_noise_std: float = 1e-3

    def __post_init__(self):
        if self.ar_input_noise_std < 0 or self.grad_noise_std < 0:
            raise ConfigError("noise stds must be >= 0")
        if len(self.prenet_dims) != 2:
            raise ConfigError(f"prenet takes two layer sizes, got {self.prenet_dims}")


@dataclass
class DecoderState:
    """Per-stream decoder memory: conv rings, GRU hidden, last output frame."""

    mode: Mode
    prev_frame: np.ndarray
    slots: dict = field(default_factory=dict)


class Decoder(Module):
    def __init__(self, cfg: DecoderConfig, rng: Rng):
        self.cfg = cfg
        c = cfg
        self.prenet1 = Linear(c.output_dim, c.prenet_dims[0], rng)
        self.prenet2 = Linear(c.prenet_dims[0], c.prenet_dims[1], rng)
        in_ch = c.prenet_dims[1] + c.latent_dim + c.speaker_dim
        self.stack = []
        for i in range(c.conv_blocks):
            self.stack.append(DualModeConvBlock(in_ch if i == 0 else c.conv_channels,
                                                c.conv_channels, c.depthwise_kernel_size,
                                                c.dropout, rng))
        self.gru = GruLayer(c.conv_channels, c.gru_hidden, rng)
        self.out = Linear(c.gru_hidden, c.output_dim, rng)

    # -- shared core -----------------------------------------------------------

    def _run(self, prev_frames: Tensor, latents: Tensor, spk: Tensor, mode: Mode,
             training: bool, rng: Rng | None, state: dict | None) -> Tensor:
        p = relu(self.prenet2(relu(self.prenet1(prev_frames))))
        T = p.shape[0]
        spk_rows = _broadcast_rows(spk, T)
        h = concat([p, latents, spk_rows], axis=1)
        for i, blk in enumerate(self.stack):
            h = blk(h, mode, training=training, rng=rng, state=state, path=f"dec.stack.{i}")
        h = self.gru.forward_seq(h, state=state, path="dec.gru")
        return self.out(h)

    # -- public entry points ------------------------------------------------------

    def stateful_slots(self, mode: Mode) -> dict[str, tuple]:
        """Names and shapes of the step-context buffers for one mode."""
        branch = "causal" if mode is Mode.STREAMING else "noncausal"
        slots: dict[str, tuple] = {}
        for i, blk in enumerate(self.stack):
            dw = blk.branch(mode).dw
            if dw.left_pad:
                slots[f"dec.stack.{i}.{branch}.dw"] = (dw.left_pad, dw.channels)
        slots["dec.gru.h"] = (self.cfg.gru_hidden,)
        return slots

    def init_state(self, mode: Mode) -> DecoderState:
        slots = {name: np.zeros(shape, dtype=np.float32)
                 for name, shape in self.stateful_slots(mode).items()}
        return DecoderState(mode=mode, prev_frame=np.zeros(self.cfg.output_dim, dtype=np.float32),
                            slots=slots)

    def step(self, state: DecoderState, latent_t: Tensor, spk: Tensor,
             prev_frame: np.ndarray, mode: Mode) -> np.ndarray:
        """One inference step; mutates ``state`` and returns the new frame."""
        if mode is not state.mode:
            raise ShapeError(f"state was opened for {state.mode}, got {mode}")
        if prev_frame.shape != (self.cfg.output_dim,):
            raise ShapeError(f"prev_frame must be [{self.cfg.output_dim}], got {prev_frame.shape}")
        lat = latent_t.reshape(1, -1) if latent_t.data.ndim == 1 else latent_t
        if lat.shape != (1, self.cfg.latent_dim):
            raise ShapeError(f"latent_t must be [{self.cfg.latent_dim}], got {latent_t.shape}")
        with no_grad():
            prev = Tensor(prev_frame.reshape(1, -1), dtype=lat.dtype)
            frame = self._run(prev, lat, spk, mode, False, None, state.slots)
        out = np.asarray(frame.data[0])
        state.prev_frame = out.copy()
        return out

    def decode_teacher_forced(self, latents: Tensor, spk: Tensor, targets: np.ndarray,
                              rng: Rng, noise_std: float, mode: Mode,
                              training: bool = True) -> Tensor:
        """Sequence decode with ground-truth feedback plus Gaussian noise.

        The frame fed at step t is targets[t-1] + noise (zeros at t=0);
        noise is freshly sampled per step and channel.
        """
        if targets.shape[0] != latents.shape[0]:
            raise ShapeError(f"targets {targets.shape} vs latents {latents.shape} length mismatch")
        if targets.shape[1] != self.cfg.output_dim:
            raise ShapeError(f"targets must be [T, {self.cfg.output_dim}], got {targets.shape}")
        prev = np.zeros_like(targets)
        prev[1:] = targets[:-1]
        if noise_std > 0:
            prev = prev + rng.normal(prev.shape, 0.0, noise_std).astype(prev.dtype)
        prev_t = Tensor(prev, dtype=latents.dtype)
        return self._run(prev_t, latents, spk, mode, training, rng, None)

    def decode_free_running(self, latents: Tensor, spk: Tensor, mode: Mode,
                            state: DecoderState | None = None) -> np.ndarray:
        """Closed-loop decode: each step feeds back the frame it produced."""
        if state is None:
            state = self.init_state(mode)
        T = latents.shape[0]
        frames = np.empty((T, self.cfg.output_dim), dtype=np.float32)
        with no_grad():
            for t in range(T):
                lat = Tensor(np.asarray(latents.data[t:t + 1]), dtype=latents.dtype)
                frames[t] = self.step(state, lat, spk, state.prev_frame, mode)
        return frames

    def flops_per_frame(self) -> int:
        total = self.prenet1.flops_per_frame() + self.cfg.prenet_dims[0]
        total += self.prenet2.flops_per_frame() + self.cfg.prenet_dims[1]
        total += sum(blk.flops_per_frame() for blk in self.stack)
        total += self.gru.flops_per_frame()
        total += self.out.flops_per_frame()
        return total


def _broadcast_rows(v: Tensor, t: int) -> Tensor:
    """Repeat a [E] (or [1, E]) vector into [T, E]; gradient sums over rows."""
    flat = v.data.reshape(-1)
    data = np.broadcast_to(flat, (t, flat.shape[0])).copy()

    def bwd(out):
        v._accum_grad(out.grad.sum(axis=0).reshape(v.shape))

    return Tensor.from_op(data, (v,), bwd, "broadcast_rows")


class SpeakerTable(Module):
    """One learned embedding vector per speaker id (dense 0..S-1)."""

    def __init__(self, n_speakers: int, dim: int, rng: Rng):
        if n_speakers < 1:
            raise ConfigError(f"need at least one speaker, got {n_speakers}")
        self.n_speakers = n_speakers
        self.dim = dim
        self.embeddings = Tensor(rng.normal((n_speakers, dim), 0.0, 0.1), requires_grad=True)

    def lookup(self, speaker_id: int) -> Tensor:
        if not 0 <= speaker_id < self.n_speakers:
            raise ValueError(f"speaker id {speaker_id} outside 0..{self.n_speakers - 1}")
        from .tensor import gather_rows
        return gather_rows(self.embeddings, np.array([speaker_id], dtype=np.int64))
