"""Value types shared by the search, the oracle and the benchmark harness.

All scores are natural-log probabilities carried as plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

NEG_INF = float("-inf")
INF = float("inf")

Labels = Tuple[int, ...]


class ConfigError(ValueError):
    """Invalid configuration of a model, a search or a chunk scheduler."""


def logsumexp(a: float, b: float) -> float:
    """Return ``ln(exp(a) + exp(b))`` without overflow or underflow.

    ``-inf`` is the identity element. NaN inputs are a programming error.
    """
    if a != a or b != b:
        raise ValueError("logsumexp received NaN")
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a >= b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def logsumexp_many(values: Sequence[float]) -> float:
    out = NEG_INF
    for v in values:
        out = logsumexp(out, v)
    return out


@dataclass(frozen=True)
class Token:
    id: int
    piece: str
    is_blank: bool = False


@dataclass(frozen=True)
class Hypothesis:
    """A label-sequence prefix and its accumulated log-probability.

    The predictor state is not stored on the hypothesis itself: caches are
    keyed by ``labels``, so the label tuple is the handle into them.
    """

    labels: Labels
    score: float

    def __len__(self) -> int:
        return len(self.labels)


def normalized_score(h: Hypothesis) -> float:
    """Length-normalized score; the empty hypothesis divides by one."""
    return h.score / max(1, len(h.labels))


def rank_key(labels: Labels, score: float) -> tuple:
    """Sort key for "most probable first" with a deterministic tie-break.

    Ties on score go to the shorter label sequence, then to the
    lexicographically smaller one.
    """
    return (-score, len(labels), labels)


def normalized_rank_key(h: Hypothesis) -> tuple:
    return (-normalized_score(h), len(h.labels), h.labels)


@dataclass(frozen=True)
class BeamConfig:
    """Search hyper-parameters.

    Attributes:
        beam_width: number of hypotheses kept per frame (W).
        expand_beam: natural-log margin below the best non-blank token within
            which expansions are admitted. ``inf`` disables the pruning.
        state_beam: natural-log margin by which the best finished hypothesis
            may lead the best open one before the frame is closed early.
            ``inf`` disables the early break.
        max_symbols_per_frame: cap on non-blank emissions per hypothesis in
            a single frame.
    """

    beam_width: int = 5
    expand_beam: float = INF
    state_beam: float = INF
    max_symbols_per_frame: int = 10

    def __post_init__(self) -> None:
        if not isinstance(self.beam_width, int) or self.beam_width < 1:
            raise ConfigError(f"beam_width must be a positive integer, got {self.beam_width!r}")
        for name in ("expand_beam", "state_beam"):
            v = getattr(self, name)
            if v != v or v < 0:
                raise ConfigError(f"{name} must be non-negative or inf, got {v!r}")
        if not isinstance(self.max_symbols_per_frame, int) or self.max_symbols_per_frame < 1:
            raise ConfigError(
                f"max_symbols_per_frame must be a positive integer, got {self.max_symbols_per_frame!r}"
            )

    @property
    def unpruned(self) -> bool:
        return self.expand_beam == INF and self.state_beam == INF

    def to_dict(self) -> dict:
        return {
            "beam_width": self.beam_width,
            "expand_beam": _float_to_json(self.expand_beam),
            "state_beam": _float_to_json(self.state_beam),
            "max_symbols_per_frame": self.max_symbols_per_frame,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeamConfig":
        return cls(
            beam_width=int(d.get("beam_width", 5)),
            expand_beam=_float_from_json(d.get("expand_beam", "inf")),
            state_beam=_float_from_json(d.get("state_beam", "inf")),
            max_symbols_per_frame=int(d.get("max_symbols_per_frame", 10)),
        )


def _float_to_json(x: float):
    return "inf" if x == INF else x


def _float_from_json(x) -> float:
    if x is None:
        return INF
    return float(x)
