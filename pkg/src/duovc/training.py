"""Joint dual-mode training.

Each step forwards the model twice (non-streaming first, then
streaming), computes reconstruction and predictive-coding losses for
both modes plus the one-way distillation term, backpropagates their
weighted sum, perturbs the decoder gradients with Gaussian noise, and
applies one Adam update.  The total is the left-fold sum
distill + hpc_s + hpc_ns + rec_s + rec_ns, so the logged breakdown adds
up bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import Decoder
from .encoder import distillation_loss
from .errors import ConfigError, ShapeError
from .layers import Mode
from .model import HPC_PREFIX, ConversionModel
from .rng import Rng
from .tensor import Tensor, add, mul, sub, tmean

DECODER_PREFIX = "decoder."

LOSS_FIELDS = ("L_rec_s", "L_rec_ns", "L_hpc_s", "L_hpc_ns", "L_distill", "L_total")


@dataclass
class TrainConfig:
    steps: int = 600
    batch_size: int = 2
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    weight_distill: float = 1.0
    weight_hpc: float = 1.0
    weight_rec: float = 1.0
    tempo_min: float = 0.8
    tempo_max: float = 1.5
    tempo_augment: bool = True

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if not (0.0 < self.tempo_min <= self.tempo_max):
            raise ConfigError(f"bad tempo range [{self.tempo_min}, {self.tempo_max}]")


def reconstruction_loss(target: np.ndarray | Tensor, predicted: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
    if tgt.shape != predicted.shape:
        raise ShapeError(f"reconstruction shapes differ: {tgt.shape} vs {predicted.shape}")
    diff = sub(predicted, Tensor(tgt, dtype=predicted.dtype))
    return tmean(mul(diff, diff))


def tempo_augment(features: np.ndarray, multiplier: float | None,
                  rng: Rng | None = None) -> np.ndarray:
    """Resample T frames to round(T / multiplier) by linear interpolation.

    multiplier=None draws one uniformly from [0.8, 1.5].
    """
    if multiplier is None:
        if rng is None:
            raise ValueError("need an rng to draw a multiplier")
        multiplier = float(rng.uniform((), 0.8, 1.5))
    if not 0.8 <= multiplier <= 1.5:
        raise ValueError(f"tempo multiplier must be within [0.8, 1.5], got {multiplier}")
    t_in = features.shape[0]
    t_out = int(np.floor(t_in / multiplier + 0.5))
    if t_out == t_in and multiplier == 1.0:
        return features.copy()
    t_out = max(t_out, 1)
    pos = (np.arange(t_out, dtype=np.float64) * ((t_in - 1) / (t_out - 1)) if t_out > 1
           else np.zeros(1, dtype=np.float64))
    i0 = np.minimum(pos.astype(np.int64), t_in - 1)
    i1 = np.minimum(i0 + 1, t_in - 1)
    w = (pos - i0).astype(features.dtype)[:, None]
    base = features[i0]
    return base + w * (features[i1] - base)


def add_gradient_noise(params, rng: Rng, std: float) -> None:
    """Add i.i.d. Gaussian noise to each parameter gradient in ``params``.

    std=0 leaves gradients untouched (and draws nothing).
    """
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std == 0.0:
        return
    for p in params:
        if p.grad is not None:
            p.grad += rng.normal(p.grad.shape, 0.0, std)


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, named_params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (self.lr / bias1) * m / (np.sqrt(v / bias2) + self.eps)
            p.assign(p.data - update.astype(p.data.dtype))

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


@dataclass
class Utterance:
    bnf: np.ndarray        # [T, D_in]
    features: np.ndarray   # [T, D_out] target-speaker features
    speaker_id: int


def train_step(model: ConversionModel, batch: list[Utterance], rng: Rng,
               optimizer: Adam, cfg: TrainConfig) -> dict:
    """One optimization step over a batch; returns the loss breakdown.

    Per utterance the rng is consumed in a fixed order: non-streaming
    pass (encoder dropout, decoder noise + dropout, contrastive
    negatives) then the streaming pass likewise.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    sums: dict[str, Tensor | None] = {k: None for k in LOSS_FIELDS[:5]}

    def accum(key: str, value: Tensor) -> None:
        sums[key] = value if sums[key] is None else add(sums[key], value)

    noise_std = model.cfg.decoder.ar_input_noise_std
    for utt in batch:
        x = Tensor(utt.bnf)
        spk = model.speakers.lookup(utt.speaker_id)
        z_ns = model.encode(x, Mode.NON_STREAMING, training=True, rng=rng)
        y_ns = model.decoder.decode_teacher_forced(z_ns.latent, spk, utt.features, rng,
                                                   noise_std, Mode.NON_STREAMING)
        if cfg.weight_rec != 0.0:
            accum("L_rec_ns", reconstruction_loss(utt.features, y_ns))
        if cfg.weight_hpc != 0.0:
            accum("L_hpc_ns", model.hpc.loss(z_ns.latent, rng))
        z_s = model.encode(x, Mode.STREAMING, training=True, rng=rng)
        y_s = model.decoder.decode_teacher_forced(z_s.latent, spk, utt.features, rng,
                                                  noise_std, Mode.STREAMING)
        if cfg.weight_rec != 0.0:
            accum("L_rec_s", reconstruction_loss(utt.features, y_s))
        if cfg.weight_hpc != 0.0:
            accum("L_hpc_s", model.hpc.loss(z_s.latent, rng))
        if cfg.weight_distill != 0.0:
            accum("L_distill", distillation_loss(z_s, z_ns))

    inv_b = 1.0 / len(batch)
    zero = Tensor(np.zeros((), dtype=np.float32))

    def weighted(key: str, weight: float) -> Tensor:
        if sums[key] is None:
            return zero
        scaled = mul(sums[key], inv_b)
        return scaled if weight == 1.0 else mul(scaled, weight)

    parts = {
        "L_distill": weighted("L_distill", cfg.weight_distill),
        "L_hpc_s": weighted("L_hpc_s", cfg.weight_hpc),
        "L_hpc_ns": weighted("L_hpc_ns", cfg.weight_hpc),
        "L_rec_s": weighted("L_rec_s", cfg.weight_rec),
        "L_rec_ns": weighted("L_rec_ns", cfg.weight_rec),
    }
    total = parts["L_distill"]
    for key in ("L_hpc_s", "L_hpc_ns", "L_rec_s", "L_rec_ns"):
        total = add(total, parts[key])

    optimizer.zero_grad()
    total.backward()
    decoder_params = [p for name, p in model.named_parameters() if name.startswith(DECODER_PREFIX)]
    add_gradient_noise(decoder_params, rng, model.cfg.decoder.grad_noise_std)
    optimizer.step()

    out = {key: parts[key].item() for key in parts}
    out["L_total"] = total.item()
    return out


def train(model: ConversionModel, utterances: list[Utterance], cfg: TrainConfig,
          on_step=None) -> list[dict]:
    """Run the full loop; original and tempo-augmented batches alternate
    (even steps original, odd steps augmented)."""
    rng = Rng(cfg.seed)
    optimizer = Adam(list(model.named_parameters()), cfg.learning_rate,
                     cfg.beta1, cfg.beta2, cfg.adam_eps)
    history = []
    for step in range(cfg.steps):
        idx = rng.integers(0, len(utterances), cfg.batch_size)
        batch = [utterances[int(i)] for i in idx]
        augmented = bool(cfg.tempo_augment and step % 2 == 1)
        if augmented:
            resampled = []
            for utt in batch:
                mult = float(rng.uniform((), cfg.tempo_min, cfg.tempo_max))
                resampled.append(Utterance(tempo_augment(utt.bnf, mult),
                                           tempo_augment(utt.features, mult),
                                           utt.speaker_id))
            batch = resampled
        losses = train_step(model, batch, rng, optimizer, cfg)
        losses["step"] = step
        history.append(losses)
        if on_step is not None:
            on_step(step, losses, augmented)
    return history
