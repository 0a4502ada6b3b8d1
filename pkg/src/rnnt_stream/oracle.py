"""Exact sequence posteriors for tiny instances.

Two independent routes to the same numbers:

* :func:`enumerate_alignments` walks every alignment path (each interleaving
  of blanks and labels) depth first and sums path probabilities per label
  sequence.
* :func:`lattice_posteriors` runs the standard forward recursion over the
  ``(t, u)`` lattice once per candidate label sequence.

Neither touches the search's caches; both call the model directly.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .core import NEG_INF, ConfigError, Hypothesis, Labels, logsumexp, normalized_rank_key
from .model import AudioEmbedding, TransducerModel


class OracleLimitExceeded(ConfigError):
    """The instance is too large to enumerate."""


@dataclass(frozen=True)
class OracleLimit:
    max_T: int = 8
    max_V: int = 4
    max_total_symbols: int = 3
    max_sequences: int = 10_000
    max_paths: int = 10_000_000


def count_alignments(T: int, n_labels: int, max_total_symbols: int) -> int:
    """Number of alignment paths the enumeration visits.

    A path emitting ``u`` labels over ``T`` frames interleaves ``u`` labels
    with ``T`` blanks, the last step being a blank: ``C(T - 1 + u, u)``
    orderings, times ``n_labels ** u`` label choices.
    """
    if T == 0:
        return 1
    return sum(math.comb(T - 1 + u, u) * n_labels ** u for u in range(max_total_symbols + 1))


def count_sequences(n_labels: int, max_total_symbols: int) -> int:
    return sum(n_labels ** u for u in range(max_total_symbols + 1))


def _check(embeddings, model: TransducerModel, limit: OracleLimit) -> None:
    T, V = len(embeddings), model.vocab_size
    if T > limit.max_T:
        raise OracleLimitExceeded(f"T={T} exceeds max_T={limit.max_T}")
    if V > limit.max_V:
        raise OracleLimitExceeded(f"V={V} exceeds max_V={limit.max_V}")
    n_seq = count_sequences(V - 1, limit.max_total_symbols)
    if n_seq > limit.max_sequences:
        raise OracleLimitExceeded(f"{n_seq} sequences exceed max_sequences={limit.max_sequences}")
    n_paths = count_alignments(T, V - 1, limit.max_total_symbols)
    if n_paths > limit.max_paths:
        raise OracleLimitExceeded(f"{n_paths} alignment paths exceed {limit.max_paths}")


def enumerate_alignments(
    embeddings: Sequence[AudioEmbedding], model: TransducerModel, limit: OracleLimit = OracleLimit()
) -> Tuple[Dict[Labels, float], float]:
    """Sum every alignment path up to ``limit.max_total_symbols`` labels.

    Returns:
        ``(posteriors, residual)`` where ``posteriors`` maps each label
        sequence with non-zero mass to its log-probability and ``residual``
        is the linear-space mass of paths that would exceed the label cap.
    """
    _check(embeddings, model, limit)
    T = len(embeddings)
    blank = model.blank_id
    labels = model.vocab.non_blank_ids
    cap = limit.max_total_symbols
    mass: Dict[Labels, float] = {}
    residual = 0.0
    if T == 0:
        return {(): 0.0}, 0.0

    # explicit stack: (t, prefix, predictor output, log-prob so far)
    stack = [(0, (), model.initial_text(), 0.0)]
    while stack:
        t, prefix, text, lp = stack.pop()
        logp = model.join(embeddings[t], text)
        lb = float(logp[blank])
        if lb > NEG_INF:
            if t + 1 == T:
                mass[prefix] = logsumexp(mass.get(prefix, NEG_INF), lp + lb)
            else:
                stack.append((t + 1, prefix, text, lp + lb))
        for k in labels:
            lk = float(logp[k])
            if lk == NEG_INF:
                continue
            if len(prefix) == cap:
                residual += math.exp(lp + lk)
                continue
            stack.append((t, prefix + (k,), model.predict_step(text, k), lp + lk))
    return mass, residual


def exhaustive_sequence_posteriors(
    embeddings: Sequence[AudioEmbedding], model: TransducerModel, limit: OracleLimit = OracleLimit()
) -> Dict[Labels, float]:
    return enumerate_alignments(embeddings, model, limit)[0]


def forward_log_prob(
    embeddings: Sequence[AudioEmbedding], model: TransducerModel, labels: Labels
) -> float:
    """``log Pr(labels | embeddings)`` by the forward recursion over ``(t, u)``."""
    T, U = len(embeddings), len(labels)
    if T == 0:
        return 0.0 if U == 0 else NEG_INF
    blank = model.blank_id
    texts = [model.initial_text()]
    for k in labels:
        texts.append(model.predict_step(texts[-1], k))
    # joiner outputs for every lattice node
    lb = np.empty((T, U + 1))
    ly = np.empty((T, U))
    for t in range(T):
        for u in range(U + 1):
            logp = model.join(embeddings[t], texts[u])
            lb[t, u] = logp[blank]
            if u < U:
                ly[t, u] = logp[labels[u]]
    alpha = np.full((T, U + 1), NEG_INF)
    for t in range(T):
        for u in range(U + 1):
            if t == 0 and u == 0:
                a = 0.0
            else:
                a = NEG_INF
                if t > 0:
                    a = logsumexp(a, alpha[t - 1, u] + lb[t - 1, u])
                if u > 0:
                    a = logsumexp(a, alpha[t, u - 1] + ly[t, u - 1])
            alpha[t, u] = a
    return float(alpha[T - 1, U] + lb[T - 1, U])


def lattice_posteriors(
    embeddings: Sequence[AudioEmbedding], model: TransducerModel, limit: OracleLimit = OracleLimit()
) -> Dict[Labels, float]:
    """Forward probability of every sequence up to the label cap; zero-mass ones dropped."""
    _check(embeddings, model, limit)
    labels = model.vocab.non_blank_ids
    out = {}
    for u in range(limit.max_total_symbols + 1):
        for seq in itertools.product(labels, repeat=u):
            lp = forward_log_prob(embeddings, model, seq)
            if lp > NEG_INF:
                out[seq] = lp
    return out


def oracle_best(
    embeddings: Sequence[AudioEmbedding], model: TransducerModel, limit: OracleLimit = OracleLimit()
) -> Hypothesis:
    """Best sequence under length-normalized score, ties broken as in the search."""
    post = exhaustive_sequence_posteriors(embeddings, model, limit)
    return min((Hypothesis(k, v) for k, v in post.items()), key=normalized_rank_key)


def labels_key(labels: Sequence[int]) -> str:
    return ",".join(str(k) for k in labels)


def parse_labels_key(key: str) -> Labels:
    return tuple(int(k) for k in key.split(",")) if key else ()


def dumps_posteriors(post: Mapping[Labels, float]) -> str:
    """Fixture format: JSON object ``{"1,2": log_prob}`` with sorted keys."""
    return json.dumps({labels_key(k): v for k, v in post.items()}, indent=1, sort_keys=True) + "\n"


def loads_posteriors(text: str) -> Dict[Labels, float]:
    return {parse_labels_key(k): float(v) for k, v in json.loads(text).items()}
