"""Feature files: a one-line JSON header followed by a little-endian float64 body.

The header is ``{"feature_dim": D, "frame_shift_ms": S, "n_frames": N}``; the
body holds ``N * D`` values in row-major order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import ConfigError

MAGIC = "rnnt-stream-features"
_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class FeatureFile:
    frames: np.ndarray
    frame_shift_ms: int = 10

    @property
    def feature_dim(self) -> int:
        return int(self.frames.shape[1])

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def header(self) -> dict:
        return {"feature_dim": self.feature_dim, "frame_shift_ms": self.frame_shift_ms,
                "n_frames": self.n_frames}

    @property
    def audio_seconds(self) -> float:
        return self.n_frames * self.frame_shift_ms / 1000.0


def write_features(path, frames, frame_shift_ms: int = 10) -> FeatureFile:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ConfigError(f"features must be 2-D, got shape {frames.shape}")
    ff = FeatureFile(frames, frame_shift_ms)
    header = dict(ff.header, format=MAGIC)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        f.write(frames.astype(_DTYPE).tobytes(order="C"))
    return ff


def read_features(path) -> FeatureFile:
    with open(path, "rb") as f:
        line = f.readline()
        body = f.read()
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise ConfigError(f"{path}: not a feature file (bad header)") from None
    if not isinstance(header, dict) or header.get("format") != MAGIC:
        raise ConfigError(f"{path}: not a feature file")
    try:
        d, n, shift = (int(header[k]) for k in ("feature_dim", "n_frames", "frame_shift_ms"))
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{path}: incomplete feature header") from None
    if d < 1 or n < 0 or shift < 1:
        raise ConfigError(f"{path}: invalid feature header {header}")
    if len(body) != n * d * _DTYPE.itemsize:
        raise ConfigError(f"{path}: body holds {len(body)} bytes, header implies {n * d * 8}")
    frames = np.frombuffer(body, dtype=_DTYPE).reshape(n, d).astype(np.float64)
    return FeatureFile(frames, shift)


def synthetic_features(n_frames: int, feature_dim: int, seed: int) -> np.ndarray:
    """Standard-normal stand-in for normalized filterbank features."""
    return np.random.default_rng(seed).standard_normal((n_frames, feature_dim))
