"""Predictive-coding training heads over the encoder latent.

Two heads share nothing but the latent.  The contrastive head runs a
GRU aggregator over z and, for each step offset j in 1..m, scores the
true future latent against sampled negatives with a per-offset bilinear
form under an InfoNCE objective.  The regression head runs its own GRU
aggregator and predicts the future latents directly under an L1 loss.
Both are train-time only and are dropped from inference checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, InsufficientContextError
from .layers import GruLayer, Linear, Module
from .rng import Rng
from .tensor import (
    Tensor,
    add,
    concat,
    gather_rows,
    logsumexp_rows,
    mul,
    reshape,
    rows,
    sub,
    tabs,
    tsum,
)


class NegativeSampling(Enum):
    """How contrastive negatives are drawn (uniform within the utterance)."""

    UNIFORM_UTTERANCE = "uniform-utterance"


@dataclass
class HpcConfig:
    prediction_steps: int = 4          # m
    negatives: int = 8                 # per positive
    gnet_hidden: int = 32
    negative_sampling: NegativeSampling = NegativeSampling.UNIFORM_UTTERANCE
    # Regression targets are detached so this head trains the predictor and
    # the aggregation path without also dragging the latent toward its own
    # future values; the contrastive term keeps the latent from collapsing.
    detach_targets: bool = True

    def __post_init__(self):
        if self.prediction_steps < 1:
            raise ConfigError(f"prediction_steps must be >= 1, got {self.prediction_steps}")
        if self.negatives < 1:
            raise ConfigError(f"negatives must be >= 1, got {self.negatives}")


def sample_negatives(rng: Rng, total: int, t_pos: int, n_neg: int) -> np.ndarray:
    """n_neg distinct indices uniform over {0..total-1} minus the positive."""
    if total <= n_neg:
        raise ConfigError(f"need more than {n_neg} frames to draw {n_neg} negatives, got {total}")
    if not 0 <= t_pos < total:
        raise ValueError(f"t_pos {t_pos} outside [0, {total})")
    return rng.choice_without(total, t_pos, n_neg)


class CpcHead(Module):
    def __init__(self, latent_dim: int, cfg: HpcConfig, rng: Rng):
        self.cfg = cfg
        self.latent_dim = latent_dim
        self.gnet = GruLayer(latent_dim, cfg.gnet_hidden, rng)
        # score(z', r; j) = z' . (W_j r): one bilinear matrix per offset
        self.score_mats = [Linear(cfg.gnet_hidden, latent_dim, rng)
                           for _ in range(cfg.prediction_steps)]

    def loss(self, z: Tensor, rng: Rng) -> Tensor:
        """InfoNCE averaged over every valid (t, offset) pair."""
        T = z.shape[0]
        m, n_neg = self.cfg.prediction_steps, self.cfg.negatives
        if T <= m + 1:
            raise InsufficientContextError(f"contrastive loss needs T > {m + 1}, got {T}")
        if T <= n_neg:
            raise ConfigError(f"contrastive loss needs T > {n_neg} negatives, got T={T}")
        r = self.gnet.forward_seq(z)
        total = None
        n_pairs = 0
        for j in range(1, m + 1):
            tv = T - j
            proj = self.score_mats[j - 1](rows(r, 0, tv))       # [tv, H]
            pos = tsum(mul(proj, rows(z, j, T)), axis=1)        # [tv]
            neg_idx = np.concatenate(
                [sample_negatives(rng, T, t + j, n_neg) for t in range(tv)])
            rep = np.repeat(np.arange(tv, dtype=np.int64), n_neg)
            neg = tsum(mul(gather_rows(proj, rep), gather_rows(z, neg_idx)), axis=1)
            scores = concat([reshape(pos, (tv, 1)), reshape(neg, (tv, n_neg))], axis=1)
            contrib = tsum(sub(logsumexp_rows(scores), pos))
            total = contrib if total is None else add(total, contrib)
            n_pairs += tv
        return mul(total, 1.0 / n_pairs)


class ApcHead(Module):
    def __init__(self, latent_dim: int, cfg: HpcConfig, rng: Rng):
        self.cfg = cfg
        self.latent_dim = latent_dim
        self.gnet = GruLayer(latent_dim, cfg.gnet_hidden, rng)
        self.predictors = [Linear(cfg.gnet_hidden, latent_dim, rng)
                           for _ in range(cfg.prediction_steps)]

    def loss(self, z: Tensor) -> Tensor:
        """Mean absolute error of direct future-latent predictions."""
        T = z.shape[0]
        m = self.cfg.prediction_steps
        if T <= m:
            raise InsufficientContextError(f"regression loss needs T > {m}, got {T}")
        r = self.gnet.forward_seq(z)
        total = None
        n_elems = 0
        for j in range(1, m + 1):
            tv = T - j
            pred = self.predictors[j - 1](rows(r, 0, tv))
            target = rows(z, j, T)
            if self.cfg.detach_targets:
                target = target.detach()
            contrib = tsum(tabs(sub(pred, target)))
            total = contrib if total is None else add(total, contrib)
            n_elems += tv * self.latent_dim
        return mul(total, 1.0 / n_elems)


class HpcHeads(Module):
    """Both predictive-coding heads; the combined loss is their sum."""

    def __init__(self, latent_dim: int, cfg: HpcConfig, rng: Rng):
        self.cfg = cfg
        self.cpc = CpcHead(latent_dim, cfg, rng)
        self.apc = ApcHead(latent_dim, cfg, rng)

    def loss(self, z: Tensor, rng: Rng) -> Tensor:
        """Contrastive part first (consumes rng draws), then regression."""
        return add(self.cpc.loss(z, rng), self.apc.loss(z))


def hpc_loss(heads: HpcHeads, z: Tensor, rng: Rng) -> Tensor:
    return heads.loss(z, rng)
