"""Command-line entry point: ``rnnt-stream {decode,gen,compare,bench,sweep}``.

Exit codes:
    0: success (``compare`` also returns 0 when the outputs disagree).
    2: an input file is missing or unreadable, or an output path is not
       writable.
    3: invalid configuration: bad flag values, malformed model, feature or
       workload files, or an instance too large for ``--oracle``. Argument
       parsing errors also exit 3 so that 2 always means a file problem.

``decode`` and ``compare`` read the model from ``--model`` or, when the flag
is omitted, from the path in ``$RNNT_STREAM_MODEL``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from . import __version__
from .beam_search import decode_reference
from .bench import (
    STANDARD_MODEL,
    Workload,
    decode_stream,
    parse_beam,
    rows_to_csv,
    run_bench,
    standard_workload,
    sweep,
)
from .chunking import ChunkConfig, encode_offline
from .core import BeamConfig, ConfigError
from .features import read_features, synthetic_features, write_features
from .oracle import OracleLimit, oracle_best
from .toy import ToyModelSpec, build_toy_model, load_model, save_model

MODEL_ENV = "RNNT_STREAM_MODEL"

EXIT_OK = 0
EXIT_FILE = 2
EXIT_CONFIG = 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _score(x: float):
    return None if x == float("-inf") else x


def _beam_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt-ms", type=int, default=800, help="chunk size (decoding threshold) in ms")
    rc = p.add_mutually_exclusive_group()
    rc.add_argument("--rc-ms", type=int, default=None, help="right context in ms (default 200)")
    rc.add_argument("--rc-frames", type=int, default=None, help="right context in raw frames")
    p.add_argument("--frame-shift-ms", type=int, default=None,
                   help="defaults to the feature file's frame shift")
    p.add_argument("--beam", type=int, default=5, help="beam width W")
    p.add_argument("--expand-beam", default="inf", help="omitted means no expansion pruning")
    p.add_argument("--state-beam", default="inf", help="omitted means no early frame break")
    p.add_argument("--max-symbols", type=int, default=10, help="labels per hypothesis per frame")
    p.add_argument("--packet-frames", type=int, default=10, help="frames per streamed packet")


def _beam_config(args) -> BeamConfig:
    return BeamConfig(args.beam, parse_beam(args.expand_beam), parse_beam(args.state_beam),
                      args.max_symbols)


def _model_path(args) -> str:
    path = args.model or os.environ.get(MODEL_ENV)
    if not path:
        raise CliError(EXIT_CONFIG, f"no model given: pass --model or set ${MODEL_ENV}")
    return path


def _load_inputs(args):
    model = load_model(_model_path(args))
    feats = read_features(args.features)
    shift = args.frame_shift_ms or feats.frame_shift_ms
    chunk = ChunkConfig.from_ms(args.dt_ms, _rc_ms(args, shift), shift)
    return model, feats, chunk


def _rc_ms(args, shift: int) -> int:
    if args.rc_frames is not None:
        return args.rc_frames * shift
    return 200 if args.rc_ms is None else args.rc_ms


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_decode(args) -> int:
    model, feats, chunk = _load_inputs(args)
    beam = _beam_config(args)
    res, enc = decode_stream(model, feats.frames, chunk, beam, args.packet_frames)
    transcript = model.vocab.detokenize(res.labels)
    if args.json:
        _emit({
            "transcript": transcript,
            "labels": list(res.labels),
            "score": _score(res.score),
            "n_best": [{"labels": list(h.labels), "score": h.score} for h in res.n_best],
            "stats": dict(res.stats.to_dict(), encoder_frames=enc.encoder_frames,
                          max_latency_ms=enc.max_latency_ms, n_frames=feats.n_frames),
            "beam": beam.to_dict(),
        })
    else:
        print(transcript)
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = ToyModelSpec(
        family=args.family, feature_dim=args.feature_dim, encoder_dim=args.encoder_dim,
        predictor_dim=args.predictor_dim, vocab_size=args.vocab_size, seed=args.seed,
        subsample_factor=args.subsample_factor, logit_scale=args.logit_scale,
        blank_bias=args.blank_bias, n_frames=max(args.n_frames, 1),
    )
    if args.n_frames < 0:
        raise ConfigError(f"--n-frames must be non-negative, got {args.n_frames}")
    model = build_toy_model(spec)
    feats = synthetic_features(args.n_frames, model.feature_dim, args.seed)
    write_features(args.features_out, feats, args.frame_shift_ms)
    save_model(model, args.model_out)
    out = {"features": args.features_out, "model": args.model_out, "n_frames": args.n_frames,
           "feature_dim": model.feature_dim, "frame_shift_ms": args.frame_shift_ms,
           "seed": args.seed, "family": spec.family}
    if args.workload_out:
        w = standard_workload(args.n_utterances, args.seed, model=spec)
        w.save(args.workload_out)
        out["workload"] = args.workload_out
    if args.json:
        _emit(out)
    return EXIT_OK


def cmd_compare(args) -> int:
    beam = _beam_config(args)
    if args.workload:
        if args.oracle:
            raise ConfigError("--oracle needs a single --features file, not a workload")
        w = Workload.load(args.workload)
        model = load_model(args.model) if args.model else build_toy_model(w.model)
        utts = [synthetic_features(n, model.feature_dim, s) for n, s in w.utterances]
        chunk = w.chunk_config
    else:
        if not args.features:
            raise ConfigError("compare needs --features or --workload")
        model, feats, chunk = _load_inputs(args)
        utts = [feats.frames]

    agree = cheaper = 0
    calls_p = calls_r = 0
    pruned_score = reference_score = 0.0
    last = None
    for frames in utts:
        pruned, _ = decode_stream(model, frames, chunk, beam, args.packet_frames)
        ref = decode_reference(encode_offline(frames, model, chunk), model, beam)
        agree += pruned.labels == ref.labels
        cheaper += pruned.stats.joiner_calls < ref.stats.joiner_calls
        calls_p += pruned.stats.joiner_calls
        calls_r += ref.stats.joiner_calls
        pruned_score += pruned.score
        reference_score += ref.score
        last = (pruned, ref, frames)

    out = {
        "agree": agree == len(utts),
        "pruned_score": _score(pruned_score),
        "reference_score": _score(reference_score),
        "joiner_calls_pruned": calls_p,
        "joiner_calls_reference": calls_r,
        "n_utterances": len(utts),
        "n_agree": agree,
        "n_cheaper": cheaper,
        "beam": beam.to_dict(),
    }
    if len(utts) == 1:
        pruned, ref, frames = last
        out["pruned_labels"] = list(pruned.labels)
        out["reference_labels"] = list(ref.labels)
        if args.oracle:
            embs = encode_offline(frames, model, chunk)
            best = oracle_best(embs, model, OracleLimit(max_total_symbols=args.oracle_max_symbols))
            out["oracle_labels"] = list(best.labels)
            out["oracle_score"] = best.score
            out["oracle_agree"] = best.labels == pruned.labels
    _emit(out)
    return EXIT_OK


def _workload_from_args(args) -> Workload:
    w = Workload.load(args.workload) if args.workload else standard_workload(args.n_utterances, args.seed)
    beam = BeamConfig(
        args.beam if args.beam is not None else w.beam.beam_width,
        parse_beam(args.expand_beam) if args.expand_beam is not None else w.beam.expand_beam,
        parse_beam(args.state_beam) if args.state_beam is not None else w.beam.state_beam,
        args.max_symbols if args.max_symbols is not None else w.beam.max_symbols_per_frame,
    )
    return replace(
        w,
        beam=beam,
        concurrency=args.concurrency if args.concurrency is not None else w.concurrency,
        dt_ms=args.dt_ms if args.dt_ms is not None else w.dt_ms,
        rc_ms=_rc_ms(args, w.frame_shift_ms) if (args.rc_ms, args.rc_frames) != (None, None) else w.rc_ms,
    )


def cmd_bench(args) -> int:
    w = _workload_from_args(args)
    model = load_model(args.model) if args.model else None
    if args.out:
        _check_writable(args.out)
    rep = run_bench(w, model)
    report = dict(rep.to_dict(per_utterance=args.per_utterance),
                  workload=w.to_dict() if args.per_utterance else None,
                  beam=w.beam.to_dict(), dt_ms=w.dt_ms, rc_ms=w.rc_ms)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=1, sort_keys=True)
            f.write("\n")
    if args.json:
        _emit(report)
    else:
        print(f"throughput {rep.throughput:.3f} audio-s/s  rtf@{rep.concurrency} {rep.rtf_at_n:.4f}  "
              f"joiner_calls {rep.joiner_calls}  encoder_frames {rep.encoder_frames}")
    return EXIT_OK


def _floats(text: str) -> List[float]:
    return [parse_beam(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def cmd_sweep(args) -> int:
    w = _workload_from_args(args)
    model = load_model(args.model) if args.model else None
    if args.out:
        _check_writable(args.out)
    rows = sweep(w, _floats(args.expand_beams), _floats(args.state_beams), _ints(args.dt_values), model)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    if args.json:
        _emit(rows)
    elif not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def _check_writable(path: str) -> None:
    """Fail before a long run rather than after it."""
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK) or os.path.isdir(path):
        raise PermissionError(f"cannot write {path}")


def _bench_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="weight file; defaults to the workload's model spec")
    p.add_argument("--workload", help="workload JSON; defaults to the standard workload")
    p.add_argument("--n-utterances", type=int, default=500, help="size of the default workload")
    p.add_argument("--seed", type=int, default=0, help="seed of the default workload")
    p.add_argument("--concurrency", type=int, default=None, help="worker streams N")
    p.add_argument("--dt-ms", type=int, default=None)
    rc = p.add_mutually_exclusive_group()
    rc.add_argument("--rc-ms", type=int, default=None)
    rc.add_argument("--rc-frames", type=int, default=None)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--expand-beam", default=None)
    p.add_argument("--state-beam", default=None)
    p.add_argument("--max-symbols", type=int, default=None)
    p.add_argument("--json", action="store_true", help="print the report as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rnnt-stream", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decode", help="decode a feature file")
    p.add_argument("--model", help=f"weight file (default: ${MODEL_ENV})")
    p.add_argument("--features", required=True, help="feature file")
    _beam_args(p)
    p.add_argument("--json", action="store_true", help="print transcript and stats as JSON")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("gen", help="write a seeded toy model and feature file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-frames", type=int, default=100)
    p.add_argument("--frame-shift-ms", type=int, default=10)
    p.add_argument("--family", choices=["linear_recurrent", "table_driven"], default="linear_recurrent")
    p.add_argument("--feature-dim", type=int, default=STANDARD_MODEL.feature_dim)
    p.add_argument("--encoder-dim", type=int, default=STANDARD_MODEL.encoder_dim)
    p.add_argument("--predictor-dim", type=int, default=STANDARD_MODEL.predictor_dim)
    p.add_argument("--vocab-size", type=int, default=STANDARD_MODEL.vocab_size)
    p.add_argument("--subsample-factor", type=int, default=STANDARD_MODEL.subsample_factor)
    p.add_argument("--logit-scale", type=float, default=STANDARD_MODEL.logit_scale)
    p.add_argument("--blank-bias", type=float, default=STANDARD_MODEL.blank_bias)
    p.add_argument("--features-out", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--workload-out", help="also write a standard workload for this model")
    p.add_argument("--n-utterances", type=int, default=500)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compare", help="pruned vs. reference (and optionally oracle) decode")
    p.add_argument("--model", help=f"weight file (default: ${MODEL_ENV}; with --workload, its spec)")
    p.add_argument("--features", help="feature file")
    p.add_argument("--workload", help="compare over every utterance of a workload")
    _beam_args(p)
    p.add_argument("--oracle", action="store_true", help="also run the exhaustive oracle")
    p.add_argument("--oracle-max-symbols", type=int, default=3)
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is always JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="measure throughput and rtf@N")
    _bench_args(p)
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--per-utterance", action="store_true", help="include per-utterance rows")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="bench over a beam x DT grid, CSV out")
    _bench_args(p)
    p.add_argument("--expand-beams", default="inf")
    p.add_argument("--state-beams", default="inf")
    p.add_argument("--dt-values", default="800")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    prog = parser.prog
    try:
        return args.func(args)
    except CliError as exc:
        print(f"{prog}: error: {exc}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"{prog}: error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except (ConfigError, ValueError) as exc:
        print(f"{prog}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
