"""Full conversion model: dual-mode encoder, speaker table,
autoregressive dual-mode decoder, and train-time predictive-coding
heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import register_config_types
from .decoder import Decoder, DecoderConfig, SpeakerTable
from .encoder import Encoder, EncoderConfig, EncoderOutput
from .errors import ConfigError
from .hpc import HpcConfig, HpcHeads, NegativeSampling
from .layers import Mode, Module
from .rng import Rng
from .tensor import Tensor, no_grad

HPC_PREFIX = "hpc."


@dataclass
class ModelConfig:
    """Top-level dims are authoritative; matching sub-config fields
    (encoder input, decoder latent/speaker/output dims) are derived."""

    input_dim: int = 8
    output_dim: int = 16
    n_speakers: int = 4
    speaker_dim: int = 16
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    hpc: HpcConfig = field(default_factory=HpcConfig)

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ConfigError(f"need at least 2 speakers (source and target), got {self.n_speakers}")
        self.encoder.input_dim = self.input_dim
        self.decoder.latent_dim = self.encoder.gru_hidden
        self.decoder.speaker_dim = self.speaker_dim
        self.decoder.output_dim = self.output_dim


register_config_types(ModelConfig, EncoderConfig, DecoderConfig, HpcConfig, NegativeSampling)


class ConversionModel(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = Rng(cfg.seed)
        self.encoder = Encoder(cfg.encoder, rng)
        self.decoder = Decoder(cfg.decoder, rng)
        self.speakers = SpeakerTable(cfg.n_speakers, cfg.speaker_dim, rng)
        self.hpc = HpcHeads(cfg.encoder.gru_hidden, cfg.hpc, rng)

    def inference_parameters(self):
        """Named parameters without the train-only predictive-coding heads."""
        for name, p in self.named_parameters():
            if not name.startswith(HPC_PREFIX):
                yield name, p

    def encode(self, features: Tensor, mode: Mode, training: bool = False,
               rng: Rng | None = None) -> EncoderOutput:
        return self.encoder.encode(features, mode, training=training, rng=rng)

    def convert(self, features: np.ndarray, speaker_id: int, mode: Mode) -> np.ndarray:
        """Offline conversion: full-sequence encode, then free-running decode."""
        with no_grad():
            z = self.encoder.encode(Tensor(features), mode)
            spk = self.speakers.lookup(speaker_id)
            return self.decoder.decode_free_running(z.latent, spk, mode)

    def flops_per_frame(self, mode: Mode = Mode.STREAMING) -> int:
        return self.encoder.flops_per_frame(mode) + self.decoder.flops_per_frame()
