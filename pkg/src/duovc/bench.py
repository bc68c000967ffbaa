"""Computational-efficiency measurement.

Conventions (pinned so counts are exactly testable):
  - one multiply-accumulate = 2 FLOPs;
  - convolution: 2 * T * C_in * C_out * k; depthwise: 2 * T * C * k;
  - linear: 2 * T * in * out;
  - GRU: 2 * 3H * (I + H) per frame for the two packed matmuls plus 11H
    gate arithmetic (reset 2H, update 2H, candidate 3H, blend 4H);
  - only the branch selected by the inference mode is counted.

The real-time factor is wall-clock inference time divided by the input
audio duration; the predicted end-to-end latency of a chunked pipeline
is chunk_ms * (1 + RTF): one chunk of input waiting plus its inference.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .layers import Mode
from .model import ConversionModel
from .rng import Rng
from .streaming import open_stream, push_chunk


@dataclass
class RtfStats:
    minimum: float
    median: float
    maximum: float


@dataclass
class LatencyReport:
    chunk_ms: float
    rtf: float
    inference_latency_ms: float
    total_latency_ms: float
    flops_per_second: int
    backend: str = ""

    def lines(self) -> list[str]:
        out = [
            f"chunk_ms={self.chunk_ms:.3f}",
            f"rtf={self.rtf:.6f}",
            f"inference_latency_ms={self.inference_latency_ms:.3f}",
            f"total_latency_ms={self.total_latency_ms:.3f}",
            f"flops_per_second={self.flops_per_second}",
            f"gflops_per_second={self.flops_per_second / 1e9:.6f}",
        ]
        if self.backend:
            out.append(f"backend={self.backend}")
        return out


def predict_latency(chunk_ms: float, rtf: float) -> tuple[float, float]:
    """(inference_ms, total_ms) = (chunk * rtf, chunk * (1 + rtf))."""
    if chunk_ms <= 0:
        raise ValueError(f"chunk_ms must be > 0, got {chunk_ms}")
    if rtf < 0:
        raise ValueError(f"rtf must be >= 0, got {rtf}")
    return chunk_ms * rtf, chunk_ms * (1.0 + rtf)


def measure_rtf(run, frames: int, hop_ms: float, repetitions: int = 5) -> RtfStats:
    """Time ``run()`` (one inference over ``frames`` frames) against the
    input duration.  One warm-up call is excluded."""
    if repetitions < 3:
        raise ValueError(f"need at least 3 repetitions, got {repetitions}")
    duration_s = frames * hop_ms / 1000.0
    run()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        run()
        times.append(time.perf_counter() - t0)
    rtfs = sorted(t / duration_s for t in times)
    return RtfStats(minimum=rtfs[0], median=rtfs[len(rtfs) // 2], maximum=rtfs[-1])


def measure_model_rtf(model: ConversionModel, frames: int, hop_ms: float,
                      repetitions: int = 5, chunk_frames: int | None = None,
                      seed: int = 0) -> RtfStats:
    """RTF of streaming-mode conversion on random input, either one
    offline pass or chunked through the streaming engine."""
    features = Rng(seed).normal((frames, model.cfg.input_dim))

    if chunk_frames is None:
        def run():
            model.convert(features, 0, Mode.STREAMING)
    else:
        def run():
            state = open_stream(model, 0)
            for t in range(0, frames, chunk_frames):
                push_chunk(state, features[t:t + chunk_frames])

    return measure_rtf(run, frames, hop_ms, repetitions)


def count_flops(obj, frames: int, mode: Mode = Mode.STREAMING) -> int:
    """Analytic FLOPs for ``frames`` frames of input; exactly linear in T."""
    try:
        per_frame = obj.flops_per_frame(mode)
    except TypeError:
        per_frame = obj.flops_per_frame()
    return per_frame * frames


def chunk_ms_to_frames(chunk_ms: float, hop_ms: float) -> int:
    """Nearest whole number of hops (160 ms at 12.5 ms/hop -> 13 frames)."""
    if chunk_ms <= 0 or hop_ms <= 0:
        raise ValueError("chunk_ms and hop_ms must be > 0")
    return max(1, int(np.floor(chunk_ms / hop_ms + 0.5)))


def build_report(model: ConversionModel, chunk_ms: float, rtf: float, hop_ms: float,
                 backend: str = "") -> LatencyReport:
    inference_ms, total_ms = predict_latency(chunk_ms, rtf)
    frames_per_second = 1000.0 / hop_ms
    flops = int(round(model.flops_per_frame(Mode.STREAMING) * frames_per_second))
    return LatencyReport(chunk_ms=chunk_ms, rtf=rtf, inference_latency_ms=inference_ms,
                         total_latency_ms=total_ms, flops_per_second=flops, backend=backend)
