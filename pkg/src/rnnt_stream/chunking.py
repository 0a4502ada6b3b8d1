"""Overlapping-chunk scheduling for a latency-controlled bidirectional encoder.

A stream of ``T`` raw frames is cut into windows of ``cs`` frames that
advance by ``cs - rc``. Each full window surfaces embeddings only for its
first ``cs - rc`` frames; the trailing ``rc`` frames are right context and
get encoded again as the head of the next window. The last window is
truncated at ``T`` and surfaces everything it holds.

A window is full when ``start + cs <= T``. That rule is what a streaming
scheduler can apply without look-ahead: as soon as ``cs`` frames from
``start`` have arrived, the window is emitted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, List, NamedTuple

import numpy as np

from .core import ConfigError
from .model import AudioEmbedding, AudioFrame, TransducerModel


@dataclass(frozen=True)
class ChunkConfig:
    cs_frames: int
    rc_frames: int
    frame_shift_ms: int = 10

    def __post_init__(self) -> None:
        if self.cs_frames < 1:
            raise ConfigError(f"chunk size must be positive, got {self.cs_frames}")
        if self.rc_frames < 0:
            raise ConfigError(f"right context must be non-negative, got {self.rc_frames}")
        if self.rc_frames >= self.cs_frames:
            raise ConfigError(
                f"right context ({self.rc_frames}) must be smaller than chunk size ({self.cs_frames})"
            )
        if self.frame_shift_ms < 1:
            raise ConfigError(f"frame shift must be positive, got {self.frame_shift_ms}")

    @property
    def stride(self) -> int:
        return self.cs_frames - self.rc_frames

    @classmethod
    def from_ms(cls, dt_ms: int, rc_ms: int, frame_shift_ms: int = 10) -> "ChunkConfig":
        """Inference-time config: chunk size from DT, right context unchanged."""
        if frame_shift_ms < 1:
            raise ConfigError(f"frame shift must be positive, got {frame_shift_ms}")
        if rc_ms < 0 or rc_ms % frame_shift_ms:
            raise ConfigError("right context must be a non-negative multiple of frame shift")
        rc = rc_ms // frame_shift_ms
        return cls(dt_to_frames(dt_ms, rc, frame_shift_ms), rc, frame_shift_ms)


class Window(NamedTuple):
    chunk_start: int
    chunk_end: int
    emit_start: int
    emit_end: int


def dt_to_frames(dt_ms: int, rc_frames: int = 0, frame_shift_ms: int = 10) -> int:
    """Convert a decoding threshold in milliseconds to a chunk size in frames."""
    if dt_ms <= 0 or dt_ms % frame_shift_ms:
        raise ConfigError(
            f"DT must be a multiple of frame shift ({frame_shift_ms} ms), got {dt_ms} ms"
        )
    cs = dt_ms // frame_shift_ms
    if cs <= rc_frames:
        raise ConfigError(f"DT of {dt_ms} ms gives {cs} frames, not more than rc={rc_frames}")
    return cs


def plan_chunks(T: int, cfg: ChunkConfig) -> List[Window]:
    if T < 0:
        raise ConfigError(f"frame count must be non-negative, got {T}")
    cs, rc, stride = cfg.cs_frames, cfg.rc_frames, cfg.stride
    windows = []
    start = 0
    while start < T:
        if start + cs <= T:
            windows.append(Window(start, start + cs, start, start + stride))
            start += stride
        else:
            windows.append(Window(start, T, start, T))
            break
    return windows


def encoder_frame_count(T: int, cfg: ChunkConfig) -> int:
    """Closed form of ``sum(chunk_end - chunk_start)`` over ``plan_chunks(T, cfg)``."""
    cs, stride = cfg.cs_frames, cfg.stride
    n_full = (T - cs) // stride + 1 if T >= cs else 0
    tail_start = n_full * stride
    return n_full * cs + max(0, T - tail_start)


def recompute_ratio(cfg: ChunkConfig) -> float:
    """Encoder frames computed per emitted frame on a long stream."""
    return cfg.cs_frames / (cfg.cs_frames - cfg.rc_frames)


def max_latency_ms(windows: Iterable[Window], frame_shift_ms: int) -> int:
    """Largest ``(chunk_end - frame) * shift`` over emitted frames."""
    return max((w.chunk_end - w.emit_start for w in windows), default=0) * frame_shift_ms


class StreamEncoder:
    """Incremental chunk scheduler for one stream.

    Push raw feature frames as they arrive; every call returns the embeddings
    that became available. :meth:`finish` flushes the final partial window.

    Attributes:
        encoder_frames: total raw frames passed through the encoder so far,
            right-context recomputation included.
        windows: the windows encoded so far, in order.
    """

    def __init__(self, model: TransducerModel, cfg: ChunkConfig):
        self.model = model
        self.cfg = cfg
        self._buf = np.zeros((0, model.feature_dim))
        self._buf_start = 0  # raw index of _buf[0]
        self._next_start = 0
        self._n_seen = 0
        self._finished = False
        self.encoder_frames = 0
        self.windows: List[Window] = []

    @property
    def frames_seen(self) -> int:
        return self._n_seen

    def push(self, frames) -> List[AudioEmbedding]:
        if self._finished:
            raise RuntimeError("push() after finish()")
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames.reshape(1, -1)
        if frames.shape[1] != self.model.feature_dim:
            raise ConfigError(
                f"expected feature dim {self.model.feature_dim}, got {frames.shape[1]}"
            )
        if frames.shape[0]:
            self._buf = np.concatenate([self._buf, frames]) if self._buf.size else frames
            self._n_seen += frames.shape[0]
        out = []
        cs, stride = self.cfg.cs_frames, self.cfg.stride
        while self._next_start + cs <= self._n_seen:
            s = self._next_start
            out.extend(self._run(Window(s, s + cs, s, s + stride)))
            self._next_start += stride
        return out

    def finish(self) -> List[AudioEmbedding]:
        if self._finished:
            return []
        self._finished = True
        s, T = self._next_start, self._n_seen
        if s >= T:
            return []
        return self._run(Window(s, T, s, T))

    def _run(self, w: Window) -> List[AudioEmbedding]:
        lo = w.chunk_start - self._buf_start
        chunk = self._buf[lo: lo + (w.chunk_end - w.chunk_start)]
        embs = self.model.encode_chunk(chunk, w.chunk_start, (w.emit_start, w.emit_end))
        self.encoder_frames += w.chunk_end - w.chunk_start
        self.windows.append(w)
        # frames before the next window start are never needed again
        drop = w.emit_end - self._buf_start
        self._buf = self._buf[drop:]
        self._buf_start = w.emit_end
        return embs

    @property
    def max_latency_ms(self) -> int:
        return max_latency_ms(self.windows, self.cfg.frame_shift_ms)


def stream_encode(
    frames: Iterable[AudioFrame], model: TransducerModel, cfg: ChunkConfig
) -> Iterator[AudioEmbedding]:
    """Lazily encode a frame stream; the iterator ending is end-of-input."""
    enc = StreamEncoder(model, cfg)
    last_ts = None
    for fr in frames:
        if last_ts is not None and fr.timestamp_ms <= last_ts:
            raise ValueError(f"frame timestamps must increase ({fr.timestamp_ms} after {last_ts})")
        last_ts = fr.timestamp_ms
        yield from enc.push(fr.features)
    yield from enc.finish()


def encode_offline(features: np.ndarray, model: TransducerModel, cfg: ChunkConfig) -> List[AudioEmbedding]:
    """Encode a whole utterance window by window from the plan."""
    features = np.asarray(features, dtype=np.float64)
    out = []
    for w in plan_chunks(features.shape[0], cfg):
        out.extend(model.encode_chunk(features[w.chunk_start:w.chunk_end], w.chunk_start,
                                      (w.emit_start, w.emit_end)))
    return out
