"""Encoder / predictor / joiner contracts and the per-session caches.

A concrete model implements :class:`TransducerModel`. The search never talks
to the predictor or the joiner directly; it goes through
:class:`PredictorCache` and :class:`JoinerCache`, which memoize by label
sequence so a prefix is never recomputed within one utterance.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .core import NEG_INF, ConfigError, Labels, Token


@dataclass(frozen=True)
class AudioFrame:
    features: np.ndarray
    timestamp_ms: int


@dataclass(frozen=True)
class AudioEmbedding:
    """Encoder output for one post-subsampling frame index."""

    frame_index: int
    vector: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class TextEmbedding:
    """Predictor output for one label prefix.

    ``state`` is the model's recurrent state after consuming the prefix; it is
    opaque to everything except the model that produced it.
    """

    vector: np.ndarray = field(repr=False)
    state: Any = field(repr=False)


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[Token, ...]

    def __post_init__(self) -> None:
        ids = [t.id for t in self.tokens]
        if ids != list(range(len(ids))):
            raise ConfigError("vocab: token ids must be dense and ordered from 0")
        n_blank = sum(1 for t in self.tokens if t.is_blank)
        if n_blank != 1:
            raise ConfigError(f"vocab: exactly one blank token required, found {n_blank}")
        if len(self.tokens) < 2:
            raise ConfigError("vocab: at least one non-blank token is required")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def blank_id(self) -> int:
        return next(t.id for t in self.tokens if t.is_blank)

    @property
    def non_blank_ids(self) -> List[int]:
        return [t.id for t in self.tokens if not t.is_blank]

    def detokenize(self, labels: Sequence[int], marker: str = "▁") -> str:
        """Join pieces; ``marker`` at the start of a piece means a word boundary."""
        text = "".join(self.tokens[i].piece for i in labels)
        return text.replace(marker, " ").strip() if marker else text

    def to_list(self) -> List[dict]:
        return [{"id": t.id, "piece": t.piece, "is_blank": t.is_blank} for t in self.tokens]

    @classmethod
    def from_pieces(cls, pieces: Sequence[str], blank_id: int = 0) -> "Vocabulary":
        return cls(tuple(Token(i, p, i == blank_id) for i, p in enumerate(pieces)))


class TransducerModel(abc.ABC):
    """The encoder/predictor/joiner triple.

    Implementations are immutable after construction and may be shared by
    any number of concurrent decode sessions.
    """

    vocab: Vocabulary
    feature_dim: int
    subsample_factor: int = 1

    @property
    def blank_id(self) -> int:
        return self.vocab.blank_id

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def emit_indices(self, emit_start: int, emit_end: int) -> range:
        """Post-subsampling indices surfaced by the raw range ``[emit_start, emit_end)``.

        With factor ``s`` this is ``ceil(lo/s) .. ceil(hi/s) - 1`` so that each
        subsampled index is owned by exactly one chunk.
        """
        s = self.subsample_factor
        return range(-(-emit_start // s), -(-emit_end // s))

    def encode_chunk(
        self, frames: np.ndarray, chunk_start: int, emit_range: Tuple[int, int]
    ) -> List[AudioEmbedding]:
        """Encode one chunk and surface the embeddings of ``emit_range``.

        Args:
            frames: ``(n, feature_dim)`` features for raw frames
                ``[chunk_start, chunk_start + n)``.
            chunk_start: raw index of the first frame in ``frames``.
            emit_range: half-open raw frame range to surface; must lie inside
                the chunk.
        """
        frames = np.asarray(frames, dtype=np.float64)
        lo, hi = emit_range
        if lo >= hi:
            return []
        if frames.ndim != 2 or frames.shape[1] != self.feature_dim:
            raise ConfigError(
                f"expected frames of shape (n, {self.feature_dim}), got {frames.shape}"
            )
        n = frames.shape[0]
        if n == 0 or lo < chunk_start or hi > chunk_start + n:
            raise ConfigError(
                f"emit range [{lo}, {hi}) outside chunk [{chunk_start}, {chunk_start + n})"
            )
        return self._encode(frames, chunk_start, self.emit_indices(lo, hi))

    @abc.abstractmethod
    def _encode(
        self, frames: np.ndarray, chunk_start: int, indices: range
    ) -> List[AudioEmbedding]:
        """Encode ``frames`` and return embeddings for subsampled ``indices``."""

    @abc.abstractmethod
    def initial_text(self) -> TextEmbedding:
        """Start-of-sequence predictor output."""

    @abc.abstractmethod
    def predict_step(self, prev: TextEmbedding, token: int) -> TextEmbedding:
        """Advance the predictor by one non-blank token."""

    @abc.abstractmethod
    def join(self, a: AudioEmbedding, t: TextEmbedding) -> np.ndarray:
        """Normalized log-probabilities over the vocabulary; a pure function."""

    def predict(self, prefix: Sequence[int]) -> TextEmbedding:
        """Predictor output for ``prefix`` computed from scratch, no caching."""
        emb = self.initial_text()
        for k in prefix:
            emb = self.predict_step(emb, k)
        return emb


class PredictorCache:
    """Per-utterance predictor memo keyed by the exact label sequence."""

    def __init__(self, model: TransducerModel):
        self.model = model
        self._cache: Dict[Labels, TextEmbedding] = {(): model.initial_text()}
        self.steps = 0

    def __len__(self) -> int:
        return len(self._cache)

    def __contains__(self, prefix) -> bool:
        return tuple(prefix) in self._cache

    def get(self, prefix: Labels) -> TextEmbedding:
        cache = self._cache
        emb = cache.get(prefix)
        if emb is not None:
            return emb
        # walk back to the longest cached ancestor, then step forward
        n = len(prefix) - 1
        while prefix[:n] not in cache:
            n -= 1
        emb = cache[prefix[:n]]
        blank = self.model.blank_id
        for i in range(n, len(prefix)):
            if prefix[i] == blank:
                raise ValueError(f"prefix {prefix} contains the blank token")
            emb = self.model.predict_step(emb, prefix[i])
            self.steps += 1
            cache[prefix[: i + 1]] = emb
        return emb

    def clear(self) -> None:
        self._cache = {(): self.model.initial_text()}


class JoinerCache:
    """Joiner memo for the current frame, plus the joiner-call counter.

    Entries are keyed by label sequence and dropped when the frame changes,
    since a ``(t, labels)`` pair is never needed after frame ``t``. Only
    cache misses are counted.

    Each entry is ``(log_probs, best_non_blank)`` with ``log_probs`` a plain
    list of floats.
    """

    def __init__(self, model: TransducerModel, predictor: PredictorCache):
        self.model = model
        self.predictor = predictor
        self.blank = model.blank_id
        self._frame: AudioEmbedding | None = None
        self._rows: Dict[Labels, Tuple[List[float], float]] = {}
        self.calls = 0

    def set_frame(self, a: AudioEmbedding) -> None:
        if self._frame is None or self._frame.frame_index != a.frame_index:
            self._frame = a
            self._rows = {}

    def __call__(self, labels: Labels) -> Tuple[List[float], float]:
        row = self._rows.get(labels)
        if row is None:
            logp = self.model.join(self._frame, self.predictor.get(labels)).tolist()
            b = self.blank
            best = max((v for i, v in enumerate(logp) if i != b), default=NEG_INF)
            row = (logp, best)
            self._rows[labels] = row
            self.calls += 1
        return row

    def joiner_call_counter(self) -> int:
        return self.calls

    def reset(self) -> None:
        self.calls = 0
        self._rows = {}
        self._frame = None


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted)))
