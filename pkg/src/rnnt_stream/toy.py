"""Synthetic transducer models and the JSON weight-file format.

Two families:

``table_driven``
    The joiner is an explicit table ``(frame, prefix) -> distribution``. The
    encoder only carries frame indices. Used for hand traces and for the
    exhaustive oracles.

``linear_recurrent``
    Small fixed-weight recurrences. The encoder runs a left-to-right and a
    right-to-left pass confined to the chunk it is given, the predictor runs
    over the label prefix, and the joiner is sum -> ReLU -> softmax.

Random weights are drawn uniformly from ``[-0.5, 0.5]`` (times
``init_scale``) with ``numpy.random.default_rng(seed)`` in a fixed order,
so a spec always regenerates the same file.
"""

from __future__ import annotations

import itertools
import json
import os
import string
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigError, Labels, Token
from .model import AudioEmbedding, TextEmbedding, TransducerModel, Vocabulary, log_softmax

FORMAT_NAME = "rnnt-stream-toy-model"
FORMAT_VERSION = 1

_EMPTY = np.zeros(0)


class ModelLoadError(ConfigError):
    """A weight file violates the schema; ``field`` names the offending path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ToyModelSpec:
    family: str = "linear_recurrent"
    feature_dim: int = 4
    encoder_dim: int = 8
    predictor_dim: int = 8
    vocab_size: int = 5
    seed: int = 0
    subsample_factor: int = 1
    init_scale: float = 1.0
    logit_scale: float = 1.0
    blank_bias: float = 0.0
    # table_driven only
    n_frames: int = 2
    max_prefix_len: int = 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ToyModelSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model spec fields: {sorted(unknown)}")
        return cls(**d)


def default_vocab(vocab_size: int) -> Vocabulary:
    if not 2 <= vocab_size <= 27:
        raise ConfigError(f"toy vocab_size must be in [2, 27], got {vocab_size}")
    return Vocabulary.from_pieces(["<blank>"] + list(string.ascii_lowercase[: vocab_size - 1]))


class LinearRecurrentModel(TransducerModel):
    family = "linear_recurrent"

    def __init__(
        self,
        vocab: Vocabulary,
        feature_dim: int,
        encoder: Dict[str, np.ndarray],
        predictor: Dict[str, np.ndarray],
        joiner: Dict[str, np.ndarray],
        subsample_factor: int = 1,
    ):
        self.vocab = vocab
        self.feature_dim = feature_dim
        self.subsample_factor = subsample_factor
        self.encoder = encoder
        self.predictor = predictor
        self.joiner = joiner
        self._check_shapes()
        for group in (encoder, predictor, joiner):
            for arr in group.values():
                arr.setflags(write=False)

    def _check_shapes(self) -> None:
        e, p, j = self.encoder, self.predictor, self.joiner
        D, V = self.feature_dim, len(self.vocab)
        H = e["left_in"].shape[0]
        P = p["rec"].shape[0]
        J = e["proj"].shape[0]
        expected = {
            "encoder.left_in": (e["left_in"], (H, D)),
            "encoder.left_rec": (e["left_rec"], (H, H)),
            "encoder.right_in": (e["right_in"], (H, D)),
            "encoder.right_rec": (e["right_rec"], (H, H)),
            "encoder.proj": (e["proj"], (J, 2 * H)),
            "encoder.proj_bias": (e["proj_bias"], (J,)),
            "predictor.embed": (p["embed"], (V, P)),
            "predictor.rec": (p["rec"], (P, P)),
            "predictor.bias": (p["bias"], (P,)),
            "predictor.proj": (p["proj"], (J, P)),
            "predictor.proj_bias": (p["proj_bias"], (J,)),
            "joiner.out": (j["out"], (V, J)),
            "joiner.out_bias": (j["out_bias"], (V,)),
        }
        for name, (arr, shape) in expected.items():
            if arr.shape != shape:
                raise ModelLoadError(name, f"expected shape {shape}, got {arr.shape}")

    def _encode(self, frames, chunk_start, indices):
        e = self.encoder
        n = frames.shape[0]
        H = e["left_rec"].shape[0]
        xl = frames @ e["left_in"].T
        xr = frames @ e["right_in"].T
        left = np.empty((n, H))
        right = np.empty((n, H))
        h = np.zeros(H)
        for i in range(n):
            h = np.tanh(xl[i] + e["left_rec"] @ h)
            left[i] = h
        # right pass starts at the chunk end: nothing beyond the chunk is visible
        h = np.zeros(H)
        for i in range(n - 1, -1, -1):
            h = np.tanh(xr[i] + e["right_rec"] @ h)
            right[i] = h
        s = self.subsample_factor
        out = []
        for j in indices:
            i = j * s - chunk_start
            vec = e["proj"] @ np.concatenate([left[i], right[i]]) + e["proj_bias"]
            out.append(AudioEmbedding(j, vec))
        return out

    def initial_text(self) -> TextEmbedding:
        p = self.predictor
        h = np.zeros(p["rec"].shape[0])
        return TextEmbedding(p["proj"] @ h + p["proj_bias"], h)

    def predict_step(self, prev: TextEmbedding, token: int) -> TextEmbedding:
        p = self.predictor
        h = np.tanh(p["embed"][token] + p["rec"] @ prev.state + p["bias"])
        return TextEmbedding(p["proj"] @ h + p["proj_bias"], h)

    def join(self, a: AudioEmbedding, t: TextEmbedding) -> np.ndarray:
        if a.vector.shape != t.vector.shape:
            raise ConfigError(
                f"joiner input mismatch: audio {a.vector.shape} vs text {t.vector.shape}"
            )
        hidden = np.maximum(a.vector + t.vector, 0.0)
        return log_softmax(self.joiner["out"] @ hidden + self.joiner["out_bias"])


class TableModel(TransducerModel):
    """Joiner outputs looked up in an explicit ``(frame, prefix)`` table.

    Args:
        rows: mapping ``(t, prefix) -> probabilities`` over the vocabulary.
        unlisted: ``"error"`` to reject lookups missing from the table, or
            ``"blank"`` to treat them as emitting blank with probability one.
    """

    family = "table_driven"

    def __init__(
        self,
        vocab: Vocabulary,
        n_frames: int,
        rows: Mapping[Tuple[int, Labels], Sequence[float]],
        unlisted: str = "error",
        feature_dim: int = 1,
        subsample_factor: int = 1,
    ):
        if unlisted not in ("error", "blank"):
            raise ConfigError(f"unlisted must be 'error' or 'blank', got {unlisted!r}")
        self.vocab = vocab
        self.n_frames = n_frames
        self.unlisted = unlisted
        self.feature_dim = feature_dim
        self.subsample_factor = subsample_factor
        V = len(vocab)
        self.probs: Dict[Tuple[int, Labels], Tuple[float, ...]] = {}
        self._log_rows: Dict[Tuple[int, Labels], np.ndarray] = {}
        for (t, prefix), row in rows.items():
            row = tuple(float(x) for x in row)
            if len(row) != V:
                raise ConfigError(f"table row {(t, prefix)} has {len(row)} entries, expected {V}")
            key = (int(t), tuple(int(k) for k in prefix))
            self.probs[key] = row
            with np.errstate(divide="ignore"):
                arr = np.log(np.array(row))
            arr.setflags(write=False)
            self._log_rows[key] = arr
        with np.errstate(divide="ignore"):
            self._blank_row = np.log(np.eye(V)[vocab.blank_id])

    def _encode(self, frames, chunk_start, indices):
        return [AudioEmbedding(j, _EMPTY) for j in indices]

    def initial_text(self) -> TextEmbedding:
        return TextEmbedding(_EMPTY, ())

    def predict_step(self, prev: TextEmbedding, token: int) -> TextEmbedding:
        return TextEmbedding(_EMPTY, prev.state + (token,))

    def join(self, a: AudioEmbedding, t: TextEmbedding) -> np.ndarray:
        row = self._log_rows.get((a.frame_index, t.state))
        if row is None:
            if self.unlisted == "blank":
                return self._blank_row.copy()
            raise ConfigError(f"no table row for frame {a.frame_index}, prefix {list(t.state)}")
        return row.copy()


def _uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=shape) * scale


def build_toy_model(spec: ToyModelSpec) -> TransducerModel:
    """Build a deterministic toy model from ``spec``."""
    if spec.vocab_size < 2:
        raise ConfigError("vocab_size must be at least 2")
    vocab = default_vocab(spec.vocab_size)
    if spec.family == "table_driven":
        return random_table_model(
            spec.n_frames, spec.vocab_size, spec.max_prefix_len, spec.seed,
            feature_dim=spec.feature_dim, subsample_factor=spec.subsample_factor,
        )
    if spec.family != "linear_recurrent":
        raise ConfigError(f"unknown model family {spec.family!r}")
    for name in ("feature_dim", "encoder_dim", "predictor_dim", "subsample_factor"):
        if getattr(spec, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    rng = np.random.default_rng(spec.seed)
    D, H, P, V = spec.feature_dim, spec.encoder_dim, spec.predictor_dim, spec.vocab_size
    J = H
    s = spec.init_scale
    encoder = {
        "left_in": _uniform(rng, (H, D), s),
        "left_rec": _uniform(rng, (H, H), s),
        "right_in": _uniform(rng, (H, D), s),
        "right_rec": _uniform(rng, (H, H), s),
        "proj": _uniform(rng, (J, 2 * H), s),
        "proj_bias": _uniform(rng, (J,), s),
    }
    predictor = {
        "embed": _uniform(rng, (V, P), s),
        "rec": _uniform(rng, (P, P), s),
        "bias": _uniform(rng, (P,), s),
        "proj": _uniform(rng, (J, P), s),
        "proj_bias": _uniform(rng, (J,), s),
    }
    out = _uniform(rng, (V, J), s) * spec.logit_scale
    out_bias = _uniform(rng, (V,), s)
    out_bias[vocab.blank_id] += spec.blank_bias
    joiner = {"out": out, "out_bias": out_bias}
    return LinearRecurrentModel(vocab, D, encoder, predictor, joiner, spec.subsample_factor)


def random_table_model(
    n_frames: int,
    vocab_size: int,
    max_total_symbols: int,
    seed: int,
    concentration: float = 1.0,
    feature_dim: int = 1,
    subsample_factor: int = 1,
) -> TableModel:
    """Table model with Dirichlet rows for every prefix shorter than the cap.

    Prefixes at the cap are left unlisted and therefore emit blank with
    probability one, so no sequence longer than ``max_total_symbols`` has
    any mass.
    """
    vocab = default_vocab(vocab_size)
    rng = np.random.default_rng(seed)
    labels = vocab.non_blank_ids
    rows = {}
    for t in range(n_frames):
        for n in range(max_total_symbols):
            for prefix in itertools.product(labels, repeat=n):
                rows[(t, prefix)] = rng.dirichlet([concentration] * vocab_size).tolist()
    return TableModel(vocab, n_frames, rows, unlisted="blank",
                      feature_dim=feature_dim, subsample_factor=subsample_factor)


# -- serialization ---------------------------------------------------------

def model_to_dict(model: TransducerModel) -> dict:
    d = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": model.family,
        "feature_dim": model.feature_dim,
        "subsample_factor": model.subsample_factor,
        "vocab": model.vocab.to_list(),
    }
    if isinstance(model, LinearRecurrentModel):
        d["encoder"] = {k: v.tolist() for k, v in model.encoder.items()}
        d["predictor"] = {k: v.tolist() for k, v in model.predictor.items()}
        d["joiner"] = {k: v.tolist() for k, v in model.joiner.items()}
    elif isinstance(model, TableModel):
        d["encoder"] = {"n_frames": model.n_frames}
        d["predictor"] = {}
        d["joiner"] = {
            "unlisted": model.unlisted,
            "rows": [
                {"t": t, "prefix": list(prefix), "probs": list(probs)}
                for (t, prefix), probs in sorted(model.probs.items(), key=lambda kv: (kv[0][0], len(kv[0][1]), kv[0][1]))
            ],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return d


def _require(d: Mapping, key: str, path: str, kind=None):
    if not isinstance(d, Mapping) or key not in d:
        raise ModelLoadError(f"{path}{key}" if path else key, "missing required field")
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ModelLoadError(f"{path}{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def _parse_vocab(items) -> Vocabulary:
    if not isinstance(items, list):
        raise ModelLoadError("vocab", "expected a list of tokens")
    tokens = []
    for i, item in enumerate(items):
        tid = _require(item, "id", f"vocab[{i}].", int)
        piece = _require(item, "piece", f"vocab[{i}].", str)
        is_blank = _require(item, "is_blank", f"vocab[{i}].", bool)
        tokens.append(Token(tid, piece, is_blank))
    try:
        return Vocabulary(tuple(tokens))
    except ConfigError as exc:
        raise ModelLoadError("vocab", str(exc).removeprefix("vocab: ")) from None


def _array(group: Mapping, key: str, path: str) -> np.ndarray:
    raw = _require(group, key, path)
    try:
        arr = np.array(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise ModelLoadError(path + key, "expected a numeric array") from None
    if not np.all(np.isfinite(arr)):
        raise ModelLoadError(path + key, "non-finite weight")
    return arr


def model_from_dict(d: Mapping) -> TransducerModel:
    """Validate a parsed weight file and build the model it describes."""
    if not isinstance(d, Mapping):
        raise ModelLoadError("<root>", "expected a JSON object")
    if _require(d, "format", "", str) != FORMAT_NAME:
        raise ModelLoadError("format", f"expected {FORMAT_NAME!r}")
    if _require(d, "version", "", int) != FORMAT_VERSION:
        raise ModelLoadError("version", f"unsupported version {d['version']}")
    family = _require(d, "family", "", str)
    feature_dim = _require(d, "feature_dim", "", int)
    subsample = _require(d, "subsample_factor", "", int)
    if feature_dim < 1:
        raise ModelLoadError("feature_dim", "must be >= 1")
    if subsample < 1:
        raise ModelLoadError("subsample_factor", "must be >= 1")
    vocab = _parse_vocab(_require(d, "vocab", ""))
    enc = _require(d, "encoder", "", dict)
    pred = _require(d, "predictor", "", dict)
    join = _require(d, "joiner", "", dict)

    if family == "linear_recurrent":
        encoder = {k: _array(enc, k, "encoder.") for k in
                   ("left_in", "left_rec", "right_in", "right_rec", "proj", "proj_bias")}
        predictor = {k: _array(pred, k, "predictor.") for k in
                     ("embed", "rec", "bias", "proj", "proj_bias")}
        joiner = {k: _array(join, k, "joiner.") for k in ("out", "out_bias")}
        return LinearRecurrentModel(vocab, feature_dim, encoder, predictor, joiner, subsample)

    if family == "table_driven":
        n_frames = _require(enc, "n_frames", "encoder.", int)
        unlisted = _require(join, "unlisted", "joiner.", str)
        if unlisted not in ("error", "blank"):
            raise ModelLoadError("joiner.unlisted", "must be 'error' or 'blank'")
        raw_rows = _require(join, "rows", "joiner.", list)
        rows = {}
        V = len(vocab)
        for i, r in enumerate(raw_rows):
            path = f"joiner.rows[{i}]."
            t = _require(r, "t", path, int)
            prefix = _require(r, "prefix", path, list)
            probs = _require(r, "probs", path, list)
            if not 0 <= t < n_frames:
                raise ModelLoadError(path + "t", f"frame {t} outside [0, {n_frames})")
            if any(not isinstance(k, int) or k == vocab.blank_id or not 0 <= k < V for k in prefix):
                raise ModelLoadError(path + "prefix", "prefix must hold non-blank token ids")
            if len(probs) != V or any(not isinstance(p, (int, float)) or isinstance(p, bool) for p in probs):
                raise ModelLoadError(path + "probs", f"expected {V} numbers")
            if any(p < 0 for p in probs):
                raise ModelLoadError(path + "probs", "negative probability")
            total = float(sum(probs))
            if abs(total - 1.0) > 1e-9:
                raise ModelLoadError(path + "probs", f"row sums to {total!r}, not 1")
            key = (t, tuple(prefix))
            if key in rows:
                raise ModelLoadError(path + "prefix", "duplicate (t, prefix) row")
            rows[key] = probs
        return TableModel(vocab, n_frames, rows, unlisted, feature_dim, subsample)

    raise ModelLoadError("family", f"unknown family {family!r}")


def dumps_model(model: TransducerModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def save_model(model: TransducerModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_model(model))


def load_model(path) -> TransducerModel:
    with open(path, encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise ModelLoadError("<root>", f"invalid JSON: {exc}") from None
    return model_from_dict(d)


# -- fixtures --------------------------------------------------------------

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")

# (blank, a, b) per (frame, prefix); a = 1, b = 2
GOLDEN_2X3_ROWS: Dict[Tuple[int, Labels], List[float]] = {
    (0, ()): [0.004, 0.986, 0.010],
    (0, (1,)): [0.95, 0.045, 0.005],
    (0, (2,)): [0.5, 0.25, 0.25],
    (0, (1, 1)): [0.1, 0.45, 0.45],
    (0, (1, 2)): [0.6, 0.2, 0.2],
    (0, (2, 1)): [0.7, 0.2, 0.1],
    (0, (2, 2)): [0.8, 0.1, 0.1],
    (1, ()): [0.9, 0.09, 0.01],
    (1, (1,)): [0.995, 0.004, 0.001],
    (1, (2,)): [0.6, 0.3, 0.1],
    (1, (1, 1)): [0.9, 0.05, 0.05],
    (1, (1, 2)): [0.85, 0.1, 0.05],
    (1, (2, 1)): [0.75, 0.125, 0.125],
    (1, (2, 2)): [0.95, 0.025, 0.025],
}


def golden_2x3() -> TableModel:
    """The hand-authored two-frame, three-token fixture.

    Prefixes of length three or more are unlisted and emit blank.
    """
    vocab = Vocabulary.from_pieces(["<blank>", "a", "b"])
    return TableModel(vocab, 2, GOLDEN_2X3_ROWS, unlisted="blank")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURE_DIR, name)


def load_fixture(name: str = "golden-2x3") -> TransducerModel:
    return load_model(fixture_path(f"{name}.model.json"))
