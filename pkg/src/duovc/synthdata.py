"""Synthetic feature corpus.

A desk-scale stand-in for recognizer bottleneck features and target
spectrogram frames.  Content signals are piecewise-constant Gaussian
segments smoothed along time; each speaker is a fixed random affine map
of the content, so cross-speaker ground truth is exactly computable and
a ridge regression from noisy content to any speaker's features gives a
quantitative error floor for the neural model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import from_dict, register_config_types, to_dict
from .errors import ConfigError, FormatError
from .featureio import read_features, write_features
from .rng import Rng

SMOOTH_WINDOW = 5
SEGMENT_FRAMES = (5, 20)
HELDOUT_EVERY = 5  # every 5th utterance is held out


@dataclass
class SynthCorpusConfig:
    n_speakers: int = 4
    content_dim: int = 8
    feature_dim: int = 16
    utterances_per_speaker: int = 10
    frames: int = 200
    hop_ms: float = 12.5
    seed: int = 0
    # Corruption is N(0, 0.01) in variance terms, i.e. std 0.1.
    bnf_noise_std: float = 0.1

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ConfigError(f"need source and target speakers, got {self.n_speakers}")
        if min(self.content_dim, self.feature_dim, self.utterances_per_speaker, self.frames) < 1:
            raise ConfigError("corpus dims must be positive")


register_config_types(SynthCorpusConfig)


@dataclass
class CorpusUtterance:
    content: np.ndarray    # [T, D_c] clean content signal
    bnf: np.ndarray        # [T, D_c] noisy, normalized recognizer stand-in
    features: np.ndarray   # [T, D_out] normalized own-speaker target features
    speaker_id: int
    index: int


def _piecewise_content(rng: Rng, frames: int, dim: int) -> np.ndarray:
    levels = np.empty((frames, dim), dtype=np.float32)
    t = 0
    while t < frames:
        seg = int(rng.integers(SEGMENT_FRAMES[0], SEGMENT_FRAMES[1] + 1)[0])
        levels[t:t + seg] = rng.normal((dim,))
        t += seg
    # centered moving average, window truncated at the edges
    half = SMOOTH_WINDOW // 2
    out = np.empty_like(levels)
    for t in range(frames):
        lo, hi = max(0, t - half), min(frames, t + half + 1)
        out[t] = levels[lo:hi].mean(axis=0)
    return out


class SynthCorpus:
    def __init__(self, cfg: SynthCorpusConfig, utterances: list[CorpusUtterance],
                 affine_maps: np.ndarray, affine_offsets: np.ndarray,
                 bnf_stats: tuple[np.ndarray, np.ndarray],
                 feature_stats: tuple[np.ndarray, np.ndarray]):
        self.cfg = cfg
        self.utterances = utterances
        self.affine_maps = affine_maps          # [S, D_c, D_out]
        self.affine_offsets = affine_offsets    # [S, D_out]
        self.bnf_stats = bnf_stats              # per-channel (mean, std)
        self.feature_stats = feature_stats

    def train_split(self) -> list[CorpusUtterance]:
        return [u for u in self.utterances if u.index % HELDOUT_EVERY != HELDOUT_EVERY - 1]

    def heldout_split(self) -> list[CorpusUtterance]:
        return [u for u in self.utterances if u.index % HELDOUT_EVERY == HELDOUT_EVERY - 1]

    def target_features(self, utt: CorpusUtterance, speaker_id: int) -> np.ndarray:
        """Ground-truth features of ``utt``'s content voiced by any speaker."""
        raw = utt.content.astype(np.float64) @ self.affine_maps[speaker_id] \
            + self.affine_offsets[speaker_id]
        mu, sd = self.feature_stats
        return ((raw - mu) / sd).astype(np.float32)


def generate_corpus(cfg: SynthCorpusConfig) -> SynthCorpus:
    """Pure function of the config (seed included)."""
    rng = Rng(cfg.seed)
    s, dc, dout = cfg.n_speakers, cfg.content_dim, cfg.feature_dim
    maps = np.stack([rng.normal((dc, dout), 0.0, 1.0 / np.sqrt(dc)).astype(np.float64)
                     for _ in range(s)])
    offsets = np.stack([rng.normal((dout,), 0.0, 0.5).astype(np.float64) for _ in range(s)])

    contents, bnfs_raw, feats_raw, speaker_ids = [], [], [], []
    for spk in range(s):
        for _ in range(cfg.utterances_per_speaker):
            content = _piecewise_content(rng, cfg.frames, dc)
            noise = rng.normal(content.shape, 0.0, cfg.bnf_noise_std)
            contents.append(content)
            bnfs_raw.append(content.astype(np.float64) + noise)
            feats_raw.append(content.astype(np.float64) @ maps[spk] + offsets[spk])
            speaker_ids.append(spk)

    def channel_stats(stack):
        flat = np.concatenate(stack, axis=0)
        mu = flat.mean(axis=0)
        sd = flat.std(axis=0)
        sd[sd == 0] = 1.0
        return mu, sd

    bnf_mu, bnf_sd = channel_stats(bnfs_raw)
    feat_mu, feat_sd = channel_stats(feats_raw)
    utterances = [CorpusUtterance(content=c,
                                  bnf=((b - bnf_mu) / bnf_sd).astype(np.float32),
                                  features=((f - feat_mu) / feat_sd).astype(np.float32),
                                  speaker_id=spk, index=i)
                  for i, (c, b, f, spk) in enumerate(zip(contents, bnfs_raw, feats_raw, speaker_ids))]
    return SynthCorpus(cfg, utterances, maps, offsets, (bnf_mu, bnf_sd), (feat_mu, feat_sd))


def make_eval_utterance(corpus: SynthCorpus, frames: int, seed: int) -> CorpusUtterance:
    """A fresh held-out-style utterance of arbitrary length (drift tests)."""
    cfg = corpus.cfg
    rng = Rng(seed)
    content = _piecewise_content(rng, frames, cfg.content_dim)
    noise = rng.normal(content.shape, 0.0, cfg.bnf_noise_std)
    mu, sd = corpus.bnf_stats
    bnf = ((content.astype(np.float64) + noise - mu) / sd).astype(np.float32)
    return CorpusUtterance(content=content, bnf=bnf,
                           features=np.zeros((frames, cfg.feature_dim), dtype=np.float32),
                           speaker_id=-1, index=-1)


def linear_oracle(corpus: SynthCorpus, target_speaker: int, ridge: float = 1e-6) -> float:
    """Held-out MSE of a ridge regression from bnf to the target speaker's
    features: the floor a competent model should approach."""
    if not 0 <= target_speaker < corpus.cfg.n_speakers:
        raise ValueError(f"speaker id {target_speaker} out of range")

    def design(split):
        x = np.concatenate([u.bnf for u in split], axis=0).astype(np.float64)
        x = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
        y = np.concatenate([corpus.target_features(u, target_speaker) for u in split],
                           axis=0).astype(np.float64)
        return x, y

    x_tr, y_tr = design(corpus.train_split())
    x_ho, y_ho = design(corpus.heldout_split())
    gram = x_tr.T @ x_tr + ridge * np.eye(x_tr.shape[1])
    weights = np.linalg.solve(gram, x_tr.T @ y_tr)
    resid = x_ho @ weights - y_ho
    return float(np.mean(resid * resid))


META_NAME = "corpus_meta.json"


def save_corpus(corpus: SynthCorpus, out_dir) -> list[Path]:
    """Write the corpus as feature files plus a JSON sidecar holding the
    config, affine maps, and normalization stats (exact float64 repr)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    table = []
    for utt in corpus.utterances:
        stem = f"utt{utt.index:04d}"
        for kind, arr in (("content", utt.content), ("bnf", utt.bnf), ("feat", utt.features)):
            path = out_dir / f"{stem}.{kind}.dvcf"
            write_features(path, arr, corpus.cfg.hop_ms)
            written.append(path)
        table.append({"index": utt.index, "speaker_id": utt.speaker_id, "stem": stem})
    meta = {
        "config": to_dict(corpus.cfg),
        "utterances": table,
        "affine_maps": corpus.affine_maps.tolist(),
        "affine_offsets": corpus.affine_offsets.tolist(),
        "bnf_stats": [corpus.bnf_stats[0].tolist(), corpus.bnf_stats[1].tolist()],
        "feature_stats": [corpus.feature_stats[0].tolist(), corpus.feature_stats[1].tolist()],
    }
    meta_path = out_dir / META_NAME
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=1))
    written.append(meta_path)
    return written


def load_corpus(in_dir) -> SynthCorpus:
    in_dir = Path(in_dir)
    meta_path = in_dir / META_NAME
    if not meta_path.exists():
        raise FormatError(f"no {META_NAME} in {in_dir}")
    meta = json.loads(meta_path.read_text())
    cfg = from_dict(SynthCorpusConfig, meta["config"])
    utterances = []
    for row in meta["utterances"]:
        stem = row["stem"]
        content, _ = read_features(in_dir / f"{stem}.content.dvcf")
        bnf, _ = read_features(in_dir / f"{stem}.bnf.dvcf")
        feat, _ = read_features(in_dir / f"{stem}.feat.dvcf")
        utterances.append(CorpusUtterance(content=content, bnf=bnf, features=feat,
                                          speaker_id=int(row["speaker_id"]),
                                          index=int(row["index"])))
    return SynthCorpus(cfg, utterances,
                       np.array(meta["affine_maps"], dtype=np.float64),
                       np.array(meta["affine_offsets"], dtype=np.float64),
                       tuple(np.array(v, dtype=np.float64) for v in meta["bnf_stats"]),
                       tuple(np.array(v, dtype=np.float64) for v in meta["feature_stats"]))


def mean_baseline_mse(corpus: SynthCorpus, target_speaker: int) -> float:
    """MSE of always predicting the training-split mean frame."""
    y_tr = np.concatenate([corpus.target_features(u, target_speaker)
                           for u in corpus.train_split()], axis=0).astype(np.float64)
    y_ho = np.concatenate([corpus.target_features(u, target_speaker)
                           for u in corpus.heldout_split()], axis=0).astype(np.float64)
    resid = y_ho - y_tr.mean(axis=0)
    return float(np.mean(resid * resid))
