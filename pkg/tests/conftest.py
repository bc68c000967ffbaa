"""Shared fixtures: tiny model configs sized for fast tests."""

import pytest

from duovc.decoder import DecoderConfig
from duovc.encoder import EncoderConfig
from duovc.hpc import HpcConfig
from duovc.model import ConversionModel, ModelConfig


def tiny_model_config(seed: int = 5, **overrides) -> ModelConfig:
    cfg = ModelConfig(
        input_dim=6, output_dim=8, n_speakers=3, speaker_dim=4, seed=seed,
        encoder=EncoderConfig(input_dim=6, bank_kernel_sizes=(1, 2, 3, 4), bank_channels=6,
                              proj_channels=8, highway_layers=2, highway_dim=8,
                              gru_hidden=10, depthwise_kernel_size=5),
        decoder=DecoderConfig(latent_dim=10, speaker_dim=4, output_dim=8,
                              prenet_dims=(12, 10), conv_channels=8, conv_blocks=2,
                              depthwise_kernel_size=5, gru_hidden=8),
        hpc=HpcConfig(prediction_steps=3, negatives=5, gnet_hidden=8))
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def tiny_model() -> ConversionModel:
    return ConversionModel(tiny_model_config())
