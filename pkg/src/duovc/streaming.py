"""Chunked streaming inference.

A stream holds every piece of temporal memory the causal model needs:
one ring of raw input frames per depthwise convolution (capacity =
its left padding), the max-pool's previous frame, GRU hidden vectors,
and the decoder's fed-back frame.  Chunk boundaries recompute exactly
the arithmetic the offline causal forward would do, so concatenated
chunk outputs are bit-identical to the offline streaming-mode result
regardless of how the input is partitioned.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .decoder import DecoderState
from .errors import ModeError, ShapeError
from .layers import Mode
from .model import ConversionModel
from .tensor import Tensor, no_grad

DEFAULT_TOLERANCE = 1e-5


@dataclass
class ChunkResult:
    frames: np.ndarray   # [c, D_out], one output frame per input frame
    seconds: float       # wall-clock duration of this push


class StreamState:
    """Mutable per-stream memory; one caller at a time."""

    def __init__(self, model: ConversionModel, speaker_id: int):
        if not 0 <= speaker_id < model.cfg.n_speakers:
            raise ValueError(f"speaker id {speaker_id} outside 0..{model.cfg.n_speakers - 1}")
        self.model = model
        self.speaker_id = speaker_id
        with no_grad():
            self.spk = model.speakers.lookup(speaker_id)
        self.encoder_slots: dict[str, np.ndarray] = {
            name: np.zeros(shape, dtype=np.float32)
            for name, shape in model.encoder.stateful_slots().items()}
        self.decoder_state: DecoderState = model.decoder.init_state(Mode.STREAMING)
        self.frames_processed = 0

    def nbytes(self) -> int:
        """Total state size; constant in stream length."""
        total = self.decoder_state.prev_frame.nbytes
        for arr in self.encoder_slots.values():
            total += arr.nbytes
        for arr in self.decoder_state.slots.values():
            total += arr.nbytes
        return total


def open_stream(model: ConversionModel, speaker_id: int) -> StreamState:
    """Fresh zero-initialized stream for one target speaker."""
    return StreamState(model, speaker_id)


def push_chunk(state: StreamState, chunk: np.ndarray) -> ChunkResult:
    """Convert one chunk of input frames; exactly len(chunk) frames out."""
    chunk = np.asarray(chunk, dtype=np.float32)
    if chunk.ndim != 2 or chunk.shape[0] < 1:
        raise ValueError(f"chunk must be a non-empty [c, D_in] matrix, got shape {chunk.shape}")
    if chunk.shape[1] != state.model.cfg.input_dim:
        raise ShapeError(f"chunk feature dim {chunk.shape[1]} != model input dim "
                         f"{state.model.cfg.input_dim}")
    start = time.perf_counter()
    with no_grad():
        z = state.model.encoder.encode(Tensor(chunk), Mode.STREAMING,
                                       state=state.encoder_slots)
        frames = state.model.decoder.decode_free_running(z.latent, state.spk, Mode.STREAMING,
                                                         state=state.decoder_state)
    state.frames_processed += chunk.shape[0]
    return ChunkResult(frames=frames, seconds=time.perf_counter() - start)


def convert_chunked(model: ConversionModel, features: np.ndarray, speaker_id: int,
                    chunk_frames: int) -> np.ndarray:
    """Stream a whole utterance through fixed-size chunks."""
    if chunk_frames < 1:
        raise ValueError(f"chunk_frames must be >= 1, got {chunk_frames}")
    state = open_stream(model, speaker_id)
    outputs = [push_chunk(state, features[t:t + chunk_frames]).frames
               for t in range(0, features.shape[0], chunk_frames)]
    return np.concatenate(outputs, axis=0)


def verify_stream_equivalence(model: ConversionModel, features: np.ndarray,
                              chunk_sizes: list[int], speaker_id: int = 0,
                              mode: Mode = Mode.STREAMING) -> dict[int, float]:
    """Max |chunked - offline| per chunk size against the offline
    streaming-mode forward pass on the whole input."""
    if mode is not Mode.STREAMING:
        raise ModeError("stream equivalence is defined for streaming mode only "
                        "(non-causal branches cannot stream)")
    offline = model.convert(features, speaker_id, Mode.STREAMING)
    deviations = {}
    for size in chunk_sizes:
        chunked = convert_chunked(model, features, speaker_id, size)
        deviations[int(size)] = float(np.max(np.abs(chunked - offline)))
    return deviations
