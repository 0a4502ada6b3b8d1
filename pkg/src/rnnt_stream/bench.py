"""Throughput and rtf@N measurement over synthetic workloads.

Definitions used throughout:

* throughput: audio seconds processed per wall-clock second over the whole
  workload.
* rtf_at_n: wall seconds spent per audio second by an individual stream
  while ``N`` streams run concurrently, i.e. the sum of per-utterance wall
  times divided by the sum of audio durations. An utterance's wall time runs
  from the moment its worker asks the queue for work until its decode
  finishes. When all ``N`` workers stay busy this equals ``N / throughput``.

Workers are threads pulling utterances from a shared queue; one worker
decodes one utterance end to end. Joiner calls and encoder frame counts are
deterministic and do not depend on ``N``; timings do.
"""

from __future__ import annotations

import csv
import io
import json
import queue
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .beam_search import DecodeResult, DecodeSession
from .chunking import ChunkConfig, StreamEncoder
from .core import INF, BeamConfig, ConfigError, _float_from_json, _float_to_json
from .features import synthetic_features
from .model import TransducerModel
from .toy import ToyModelSpec, build_toy_model

SWEEP_COLUMNS = (
    "expand_beam", "state_beam", "dt_ms", "throughput", "rtf_at_n",
    "joiner_calls", "encoder_frames", "max_latency_ms",
)

# Peaky enough that pruning has something to cut, in the way a trained
# model's output distribution is.
STANDARD_MODEL = ToyModelSpec(
    family="linear_recurrent", feature_dim=8, encoder_dim=8, predictor_dim=8,
    vocab_size=8, seed=1, subsample_factor=2, logit_scale=8.0, blank_bias=16.0,
)


@dataclass(frozen=True)
class Workload:
    utterances: Tuple[Tuple[int, int], ...]
    model: ToyModelSpec = STANDARD_MODEL
    dt_ms: int = 800
    rc_ms: int = 200
    frame_shift_ms: int = 10
    beam: BeamConfig = BeamConfig()
    concurrency: int = 1
    packet_frames: int = 10

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise ConfigError(f"concurrency must be >= 1, got {self.concurrency}")
        if self.packet_frames < 1:
            raise ConfigError("packet_frames must be >= 1")
        self.chunk_config  # validates dt/rc

    @property
    def chunk_config(self) -> ChunkConfig:
        return ChunkConfig.from_ms(self.dt_ms, self.rc_ms, self.frame_shift_ms)

    @property
    def audio_seconds(self) -> float:
        return sum(n for n, _ in self.utterances) * self.frame_shift_ms / 1000.0

    def to_dict(self) -> dict:
        return {
            "utterances": [list(u) for u in self.utterances],
            "model": self.model.to_dict(),
            "dt_ms": self.dt_ms,
            "rc_ms": self.rc_ms,
            "frame_shift_ms": self.frame_shift_ms,
            "beam": self.beam.to_dict(),
            "concurrency": self.concurrency,
            "packet_frames": self.packet_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Workload":
        try:
            return cls(
                utterances=tuple((int(n), int(s)) for n, s in d["utterances"]),
                model=ToyModelSpec.from_dict(d.get("model", STANDARD_MODEL.to_dict())),
                dt_ms=int(d.get("dt_ms", 800)),
                rc_ms=int(d.get("rc_ms", 200)),
                frame_shift_ms=int(d.get("frame_shift_ms", 10)),
                beam=BeamConfig.from_dict(d.get("beam", {})),
                concurrency=int(d.get("concurrency", 1)),
                packet_frames=int(d.get("packet_frames", 10)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid workload: {exc!r}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "Workload":
        with open(path, encoding="utf-8") as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def standard_workload(n_utterances: int = 500, seed: int = 0, **overrides) -> Workload:
    """The reference toy workload: utterances of 0.6 to 2.4 s of audio."""
    rng = np.random.default_rng(seed)
    lengths = rng.integers(60, 241, size=n_utterances)
    utts = tuple((int(n), seed * 100_003 + i) for i, n in enumerate(lengths))
    return Workload(utterances=utts, **overrides)


@dataclass
class UtteranceReport:
    index: int
    n_frames: int
    audio_seconds: float
    wall_seconds: float
    joiner_calls: int
    encoder_frames: int
    max_latency_ms: int
    labels: List[int] = field(default_factory=list)
    score: float = 0.0


@dataclass
class BenchReport:
    throughput: float
    rtf_at_n: float
    concurrency: int
    wall_seconds: float
    audio_seconds: float
    joiner_calls: int
    encoder_frames: int
    max_latency_ms: int
    n_utterances: int
    utterances: List[UtteranceReport] = field(default_factory=list, repr=False)

    def deterministic(self) -> dict:
        """Counters and decode outputs; everything except timings."""
        return {
            "joiner_calls": self.joiner_calls,
            "encoder_frames": self.encoder_frames,
            "max_latency_ms": self.max_latency_ms,
            "per_utterance": [
                (u.index, u.joiner_calls, u.encoder_frames, u.max_latency_ms, tuple(u.labels), u.score)
                for u in sorted(self.utterances, key=lambda u: u.index)
            ],
        }

    def to_dict(self, per_utterance: bool = True) -> dict:
        d = asdict(self)
        if not per_utterance:
            d.pop("utterances")
        return d


def decode_stream(
    model: TransducerModel,
    features: np.ndarray,
    chunk_cfg: ChunkConfig,
    beam_cfg: BeamConfig,
    packet_frames: int = 10,
) -> Tuple[DecodeResult, StreamEncoder]:
    """Feed features packet by packet through the scheduler into a decode session."""
    enc = StreamEncoder(model, chunk_cfg)
    session = DecodeSession(model, beam_cfg)
    for i in range(0, features.shape[0], packet_frames):
        session.step(enc.push(features[i:i + packet_frames]))
    session.step(enc.finish())
    return session.finalize(), enc


def run_bench(workload: Workload, model: Optional[TransducerModel] = None) -> BenchReport:
    model = model if model is not None else build_toy_model(workload.model)
    chunk_cfg = workload.chunk_config
    beam_cfg = workload.beam
    feats = [synthetic_features(n, model.feature_dim, seed) for n, seed in workload.utterances]
    shift_s = workload.frame_shift_ms / 1000.0
    N = workload.concurrency

    todo: "queue.Queue[int]" = queue.Queue()
    for i in range(len(feats)):
        todo.put(i)
    results: List[Optional[UtteranceReport]] = [None] * len(feats)
    errors: List[BaseException] = []
    clock = {}

    def start_clock():
        clock["t0"] = time.perf_counter()

    barrier = threading.Barrier(N, action=start_clock)
    warm = feats[0] if feats else np.zeros((1, model.feature_dim))

    def worker():
        try:
            decode_stream(model, warm, chunk_cfg, beam_cfg, workload.packet_frames)
            barrier.wait()
            while True:
                # the stream's clock runs from the moment it asks for work, so
                # waiting for the interpreter between utterances is not lost
                t0 = time.perf_counter()
                try:
                    i = todo.get_nowait()
                except queue.Empty:
                    return
                res, enc = decode_stream(model, feats[i], chunk_cfg, beam_cfg, workload.packet_frames)
                dt = time.perf_counter() - t0
                results[i] = UtteranceReport(
                    index=i,
                    n_frames=feats[i].shape[0],
                    audio_seconds=feats[i].shape[0] * shift_s,
                    wall_seconds=dt,
                    joiner_calls=res.stats.joiner_calls,
                    encoder_frames=enc.encoder_frames,
                    max_latency_ms=enc.max_latency_ms,
                    labels=list(res.labels),
                    score=res.score,
                )
        except BaseException as exc:  # surfaced after join
            errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=worker, name=f"bench-{k}") for k in range(N)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    t1 = time.perf_counter()
    real_errors = [e for e in errors if not isinstance(e, threading.BrokenBarrierError)]
    if real_errors or errors:
        raise (real_errors or errors)[0]

    utts = [r for r in results if r is not None]
    wall = t1 - clock["t0"]
    audio = sum(u.audio_seconds for u in utts)
    busy = sum(u.wall_seconds for u in utts)
    return BenchReport(
        throughput=audio / wall if wall > 0 else INF,
        rtf_at_n=busy / audio if audio > 0 else 0.0,
        concurrency=N,
        wall_seconds=wall,
        audio_seconds=audio,
        joiner_calls=sum(u.joiner_calls for u in utts),
        encoder_frames=sum(u.encoder_frames for u in utts),
        max_latency_ms=max((u.max_latency_ms for u in utts), default=0),
        n_utterances=len(utts),
        utterances=utts,
    )


def sweep(
    workload: Workload,
    expand_beams: Sequence[float] = (INF,),
    state_beams: Sequence[float] = (INF,),
    dt_values: Sequence[int] = (800,),
    model: Optional[TransducerModel] = None,
) -> List[dict]:
    """One bench row per point of the (expand, state, DT) grid, in grid order."""
    model = model if model is not None else build_toy_model(workload.model)
    rows = []
    for eb in expand_beams:
        for sb in state_beams:
            for dt in dt_values:
                w = replace(workload, dt_ms=dt, beam=replace(workload.beam, expand_beam=eb, state_beam=sb))
                rep = run_bench(w, model)
                rows.append({
                    "expand_beam": _float_to_json(eb),
                    "state_beam": _float_to_json(sb),
                    "dt_ms": dt,
                    "throughput": rep.throughput,
                    "rtf_at_n": rep.rtf_at_n,
                    "joiner_calls": rep.joiner_calls,
                    "encoder_frames": rep.encoder_frames,
                    "max_latency_ms": rep.max_latency_ms,
                })
    return rows


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    return buf.getvalue()


def parse_beam(value) -> float:
    """Beam values from CLI/CSV: a number, or ``inf``/``none`` for no pruning."""
    if value is None or str(value).lower() in ("inf", "+inf", "none", "infinity"):
        return INF
    return _float_from_json(value)
