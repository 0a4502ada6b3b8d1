"""Transducer beam search with expansion and state pruning.

Per frame ``t`` the search keeps two hypothesis sets: ``A`` holds sequences
that may still emit labels at ``t``, ``B`` holds sequences that emitted blank
at ``t`` and move on to ``t + 1``.

1. ``A`` takes over the previous ``B``; ``B`` starts empty.
2. Prefix merge: every ``y`` in ``A`` absorbs the mass of each shorter
   member ``p`` of ``A`` that is a prefix of it, extended to ``y`` within
   frame ``t``. The extension probability is the product of the joiner's
   label probabilities along the path ``p -> y``. Original (pre-merge)
   scores of ``p`` are used, so every path is counted once.
3. While ``B`` holds fewer than ``W`` members more probable than the best of
   ``A``: pop the best ``y*`` of ``A``, add ``y*`` with its blank transition to
   ``B`` and push its label expansions back into ``A``.

   * state beam: stop the frame when ``max(B) >= state_beam + max(A)``.
   * expand beam: an expansion ``k`` is admitted only if
     ``log Pr(k) >= max_{non-blank} log Pr - expand_beam``.

4. Keep the ``W`` most probable members of ``B``.

The final answer is the member of ``B`` with the best length-normalized
score. With both beams infinite :func:`decode_pruned` performs exactly the
same floating point operations as :func:`decode_reference`.

Expansions that would re-create a sequence already present in ``A`` at the
start of the frame are skipped: the prefix merge has already credited that
mass, and adding it again would count the same alignment twice.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .core import (
    INF,
    NEG_INF,
    BeamConfig,
    Hypothesis,
    Labels,
    logsumexp,
    normalized_rank_key,
    rank_key,
)
from .model import AudioEmbedding, JoinerCache, PredictorCache, TransducerModel


class ProtocolError(RuntimeError):
    """Embeddings fed to a session out of frame order, or after finalize."""


class HypothesisSet:
    """Hypotheses keyed by label sequence; inserting a duplicate merges mass.

    A lazy heap serves :meth:`best` and a sorted score list serves
    :meth:`count_above` and :meth:`max_score`, so the search loop stays
    logarithmic in the set size.
    """

    __slots__ = ("_scores", "_heap", "_sorted")

    def __init__(self, items: Optional[Dict[Labels, float]] = None):
        self._scores: Dict[Labels, float] = {}
        self._heap: list = []
        self._sorted: List[float] = []
        if items:
            for k, v in items.items():
                self.add(k, v)

    def __len__(self) -> int:
        return len(self._scores)

    def __bool__(self) -> bool:
        return bool(self._scores)

    def __contains__(self, labels) -> bool:
        return labels in self._scores

    def __iter__(self) -> Iterator[Hypothesis]:
        return (Hypothesis(k, v) for k, v in self._scores.items())

    def _insert(self, labels: Labels, score: float) -> None:
        self._scores[labels] = score
        heapq.heappush(self._heap, (rank_key(labels, score), labels))
        bisect.insort(self._sorted, score)

    def _remove_score(self, score: float) -> None:
        i = bisect.bisect_left(self._sorted, score)
        del self._sorted[i]

    def add(self, labels: Labels, score: float) -> None:
        old = self._scores.get(labels)
        if old is None:
            self._insert(labels, score)
        else:
            self.replace(labels, logsumexp(old, score))

    def replace(self, labels: Labels, score: float) -> None:
        old = self._scores.get(labels)
        if old is not None:
            if old == score:
                return
            self._remove_score(old)
        self._insert(labels, score)

    def score(self, labels: Labels) -> float:
        return self._scores[labels]

    def pop(self, labels: Labels) -> float:
        score = self._scores.pop(labels)
        self._remove_score(score)
        return score

    def max_score(self) -> float:
        return self._sorted[-1] if self._sorted else NEG_INF

    def best(self) -> Hypothesis:
        heap, scores = self._heap, self._scores
        while True:
            key, labels = heap[0]
            if scores.get(labels) == -key[0]:
                return Hypothesis(labels, -key[0])
            heapq.heappop(heap)  # stale: popped or re-scored

    def count_above(self, score: float) -> int:
        return len(self._sorted) - bisect.bisect_right(self._sorted, score)

    def ranked(self) -> List[Hypothesis]:
        return [Hypothesis(k, v) for k, v in
                sorted(self._scores.items(), key=lambda kv: rank_key(kv[0], kv[1]))]

    def truncate(self, width: int) -> "HypothesisSet":
        if len(self._scores) <= width:
            return HypothesisSet(self._scores)
        return HypothesisSet({h.labels: h.score for h in self.ranked()[:width]})

    def as_dict(self) -> Dict[Labels, float]:
        return dict(self._scores)


@dataclass
class DecodeStats:
    joiner_calls: int = 0
    pruned_expansions: int = 0
    state_beam_breaks: int = 0
    frames: int = 0
    pops: int = 0
    predictor_steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of a decode.

    ``best`` is ``None`` only if every hypothesis died, which can happen with
    table models whose blank probability is zero.
    """

    best: Optional[Hypothesis]
    n_best: Tuple[Hypothesis, ...]
    stats: DecodeStats = field(compare=False)

    @property
    def labels(self) -> Labels:
        return self.best.labels if self.best is not None else ()

    @property
    def score(self) -> float:
        return self.best.score if self.best is not None else NEG_INF


def _result(beam: HypothesisSet, stats: DecodeStats) -> DecodeResult:
    n_best = tuple(sorted(beam, key=normalized_rank_key))
    return DecodeResult(n_best[0] if n_best else None, n_best, stats)


def _prefix_merge(A: HypothesisSet, joiner: JoinerCache) -> None:
    """Credit each member of ``A`` with in-frame extensions of its prefixes in ``A``."""
    if len(A) < 2:
        return
    orig = A.as_dict()
    by_len = sorted(orig, key=lambda y: (len(y), y))
    for i, y in enumerate(by_len):
        total = orig[y]
        for p in by_len[:i]:
            n = len(p)
            if n >= len(y) or y[:n] != p:
                continue
            path = orig[p]
            for j in range(n, len(y)):
                path += joiner(y[:j])[0][y[j]]
            total = logsumexp(total, path)
        A.replace(y, total)


def _snapshot(s: HypothesisSet) -> Dict[Labels, float]:
    return s.as_dict()


class DecodeSession:
    """Re-entrant pruned search over embeddings that arrive chunk by chunk.

    Feeding the same embeddings in any batching gives a bit-identical result
    to a one-shot :func:`decode_pruned`.

    Args:
        model: shared, read-only transducer model.
        cfg: beam configuration.
        trace: optional list; when given, every merge, pop, stop and
            truncation is appended to it as a dict with ``A``/``B`` snapshots.
    """

    def __init__(self, model: TransducerModel, cfg: BeamConfig, trace: Optional[list] = None):
        self.model = model
        self.cfg = cfg
        self.predictor = PredictorCache(model)
        self.joiner = JoinerCache(model, self.predictor)
        self.beam = HypothesisSet({(): 0.0})
        self.stats = DecodeStats()
        self.trace = trace
        self._last_index = -1
        self._final: Optional[DecodeResult] = None

    def joiner_call_counter(self) -> int:
        return self.joiner.calls

    def step(self, embeddings: Iterable[AudioEmbedding]) -> DecodeResult:
        if self._final is not None:
            raise ProtocolError("session already finalized")
        for emb in embeddings:
            if emb.frame_index <= self._last_index:
                raise ProtocolError(
                    f"frame {emb.frame_index} arrived after frame {self._last_index}"
                )
            self._last_index = emb.frame_index
            self._advance(emb)
        return _result(self.beam, self._sync_stats())

    def finalize(self) -> DecodeResult:
        if self._final is None:
            self._final = _result(self.beam, self._sync_stats())
        return self._final

    def _sync_stats(self) -> DecodeStats:
        self.stats.joiner_calls = self.joiner.calls
        self.stats.predictor_steps = self.predictor.steps
        return DecodeStats(**self.stats.to_dict())

    def _log(self, **event) -> None:
        self.trace.append(event)

    def _advance(self, emb: AudioEmbedding) -> None:
        cfg, stats, trace = self.cfg, self.stats, self.trace
        W, expand_beam, state_beam = cfg.beam_width, cfg.expand_beam, cfg.state_beam
        max_sym = cfg.max_symbols_per_frame
        joiner = self.joiner
        joiner.set_frame(emb)
        blank = self.model.blank_id
        t = emb.frame_index

        A = self.beam
        B = HypothesisSet()
        _prefix_merge(A, joiner)
        start = set(A.as_dict())
        emitted = dict.fromkeys(start, 0)
        if trace is not None:
            self._log(t=t, event="merge", A=_snapshot(A))

        reason = "empty"
        while A:
            a_best = A.best()
            if B.count_above(a_best.score) >= W:
                reason = "beam_full"
                break
            if B.max_score() >= state_beam + a_best.score:
                stats.state_beam_breaks += 1
                reason = "state_beam"
                break
            y = a_best.labels
            score = A.pop(y)
            stats.pops += 1
            logp, best_nb = joiner(y)
            if logp[blank] > NEG_INF:
                B.add(y, score + logp[blank])
            n = emitted[y]
            if n < max_sym:
                threshold = best_nb - expand_beam
                for k, lk in enumerate(logp):
                    if k == blank or lk == NEG_INF:
                        continue
                    if lk < threshold:
                        stats.pruned_expansions += 1
                        continue
                    child = y + (k,)
                    if child in start:
                        continue
                    A.add(child, score + lk)
                    emitted[child] = n + 1
            if trace is not None:
                self._log(t=t, event="pop", y=y, A=_snapshot(A), B=_snapshot(B))
        if trace is not None:
            self._log(t=t, event="stop", reason=reason)

        self.beam = B.truncate(W)
        stats.frames += 1
        if trace is not None:
            self._log(t=t, event="truncate", B=_snapshot(self.beam))


def step_streaming(session: DecodeSession, new_embeddings: Iterable[AudioEmbedding]) -> DecodeResult:
    """Feed newly available embeddings; returns the partial result so far."""
    return session.step(new_embeddings)


def decode_pruned(
    embeddings: Sequence[AudioEmbedding],
    model: TransducerModel,
    cfg: BeamConfig,
    trace: Optional[list] = None,
) -> DecodeResult:
    session = DecodeSession(model, cfg, trace=trace)
    session.step(embeddings)
    return session.finalize()


def decode_reference(
    embeddings: Sequence[AudioEmbedding], model: TransducerModel, cfg: BeamConfig
) -> DecodeResult:
    """The unpruned search; only ``beam_width`` and ``max_symbols_per_frame`` are used."""
    W, max_sym = cfg.beam_width, cfg.max_symbols_per_frame
    predictor = PredictorCache(model)
    joiner = JoinerCache(model, predictor)
    blank = model.blank_id
    stats = DecodeStats()
    B = HypothesisSet({(): 0.0})
    last = -1
    for emb in embeddings:
        if emb.frame_index <= last:
            raise ProtocolError(f"frame {emb.frame_index} arrived after frame {last}")
        last = emb.frame_index
        joiner.set_frame(emb)
        A, B = B, HypothesisSet()
        _prefix_merge(A, joiner)
        start = set(A.as_dict())
        emitted = dict.fromkeys(start, 0)
        while A:
            a_best = A.best()
            if B.count_above(a_best.score) >= W:
                break
            y = a_best.labels
            score = A.pop(y)
            stats.pops += 1
            logp, _ = joiner(y)
            if logp[blank] > NEG_INF:
                B.add(y, score + logp[blank])
            n = emitted[y]
            if n < max_sym:
                for k, lk in enumerate(logp):
                    if k == blank or lk == NEG_INF:
                        continue
                    child = y + (k,)
                    if child in start:
                        continue
                    A.add(child, score + lk)
                    emitted[child] = n + 1
        B = B.truncate(W)
        stats.frames += 1
    stats.joiner_calls = joiner.calls
    stats.predictor_steps = predictor.steps
    return _result(B, stats)
