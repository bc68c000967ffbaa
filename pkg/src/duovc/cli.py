"""Command-line interface.

Subcommands: synth-data, train, convert, stream, verify, bench,
gradcheck.  Every run writes a ``<name>.manifest.json`` beside its
outputs recording the command, arguments, configs, seed, and library
versions; re-running the same command reproduces the outputs
byte-for-byte (wall-clock fields aside).

Exit codes: 0 success, 1 usage/input error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, backend
from .bench import build_report, chunk_ms_to_frames, measure_model_rtf
from .checkpoint import load_checkpoint, save_checkpoint
from .config import from_dict, register_config_types, to_dict
from .errors import DuoVCError
from .featureio import read_features, write_features
from .gradsuite import TOLERANCE, run_suite
from .layers import Mode
from .model import ConversionModel, ModelConfig
from .streaming import DEFAULT_TOLERANCE, open_stream, push_chunk, verify_stream_equivalence
from .synthdata import SynthCorpusConfig, generate_corpus, load_corpus, save_corpus
from .training import LOSS_FIELDS, TrainConfig, Utterance, train

CSV_HEADER = "step,L_rec_s,L_rec_ns,L_hpc_s,L_hpc_ns,L_distill,L_total"


@dataclass
class RunConfig:
    """Top-level JSON config: one section per concern."""

    corpus: SynthCorpusConfig = field(default_factory=SynthCorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


register_config_types(RunConfig, TrainConfig)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return from_dict(RunConfig, json.loads(Path(path).read_text()))


def _write_manifest(out_path: Path, command: str, args: dict, config: dict | None,
                    outputs: list, elapsed: float) -> Path:
    manifest = {
        "command": command,
        "args": args,
        "config": config,
        "outputs": [str(p) for p in outputs],
        "versions": {
            "duovc": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
            "backend": backend.name(),
        },
        "elapsed_seconds": elapsed,
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json") if out_path.suffix \
        else out_path / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return path


def _mode(name: str) -> Mode:
    return Mode.STREAMING if name == "streaming" else Mode.NON_STREAMING


def cmd_synth_data(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    corpus_cfg = cfg.corpus
    if args.seed is not None:
        corpus_cfg.seed = args.seed
    corpus = generate_corpus(corpus_cfg)
    out_dir = Path(args.out)
    written = save_corpus(corpus, out_dir)
    _write_manifest(out_dir, "synth-data", vars(args), to_dict(corpus_cfg), written,
                    time.perf_counter() - t0)
    print(f"wrote {len(written)} files to {out_dir} "
          f"({len(corpus.utterances)} utterances, {corpus.cfg.n_speakers} speakers)")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
        cfg.model.seed = args.seed
    corpus = load_corpus(args.data)
    model_cfg = replace(cfg.model, input_dim=corpus.cfg.content_dim,
                        output_dim=corpus.cfg.feature_dim, n_speakers=corpus.cfg.n_speakers)
    model = ConversionModel(model_cfg)
    utts = [Utterance(u.bnf, u.features, u.speaker_id) for u in corpus.train_split()]

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out_path.with_suffix(".train_log.csv")
    rows = [CSV_HEADER]

    def on_step(step, losses, augmented):
        rows.append(",".join([str(step)] + [repr(losses[k]) for k in
                                            ("L_rec_s", "L_rec_ns", "L_hpc_s",
                                             "L_hpc_ns", "L_distill", "L_total")]))
        if args.verbose and step % 25 == 0:
            print(f"step {step}: L_total={losses['L_total']:.5f}")

    history = train(model, utts, cfg.train, on_step=on_step)
    save_checkpoint(out_path, model, step=len(history))
    log_path.write_text("\n".join(rows) + "\n")
    _write_manifest(out_path, "train", vars(args),
                    {"model": to_dict(model_cfg), "train": to_dict(cfg.train)},
                    [out_path, log_path], time.perf_counter() - t0)
    print(f"trained {len(history)} steps; final L_total={history[-1]['L_total']:.6f}; "
          f"model -> {out_path}")
    return 0


def cmd_convert(args) -> int:
    t0 = time.perf_counter()
    model, _ = load_checkpoint(args.model)
    features, hop_ms = read_features(args.input)
    out = model.convert(features, args.speaker, _mode(args.mode))
    out_path = Path(args.out)
    write_features(out_path, out, hop_ms)
    _write_manifest(out_path, "convert", vars(args), None, [out_path],
                    time.perf_counter() - t0)
    print(f"converted {features.shape[0]} frames ({args.mode}) -> {out_path}")
    return 0


def cmd_stream(args) -> int:
    t0 = time.perf_counter()
    model, _ = load_checkpoint(args.model)
    features, hop_ms = read_features(args.input)
    chunk_frames = chunk_ms_to_frames(args.chunk_ms, hop_ms)
    state = open_stream(model, args.speaker)
    outputs = []
    chunk_times = []
    for start in range(0, features.shape[0], chunk_frames):
        result = push_chunk(state, features[start:start + chunk_frames])
        outputs.append(result.frames)
        chunk_times.append(result.seconds)
        print(f"chunk {len(outputs) - 1}: {result.frames.shape[0]} frames "
              f"in {result.seconds * 1000:.2f} ms")
    out = np.concatenate(outputs, axis=0)
    out_path = Path(args.out)
    write_features(out_path, out, hop_ms)
    chunk_s = chunk_frames * hop_ms / 1000.0
    rtf = float(np.median(np.asarray(chunk_times) / chunk_s))
    report = build_report(model, chunk_frames * hop_ms, rtf, hop_ms, backend.name())
    print("\n".join(report.lines()))
    _write_manifest(out_path, "stream", vars(args), None, [out_path],
                    time.perf_counter() - t0)
    return 0


def cmd_verify(args) -> int:
    model, _ = load_checkpoint(args.model)
    features, _ = read_features(args.input)
    sizes = [int(s) for s in args.chunk_frames.split(",") if s]
    deviations = verify_stream_equivalence(model, features, sizes, speaker_id=args.speaker)
    worst = max(deviations.values())
    for size, dev in sorted(deviations.items()):
        print(f"chunk_frames={size}: max_abs_deviation={dev:.3e}")
    if worst > args.tolerance:
        print(f"FAIL: worst deviation {worst:.3e} > tolerance {args.tolerance:g}",
              file=sys.stderr)
        return 2
    print(f"PASS: worst deviation {worst:.3e} <= tolerance {args.tolerance:g}")
    return 0


def cmd_bench(args) -> int:
    model, _ = load_checkpoint(args.model)
    hop_ms = args.hop_ms
    chunk_frames = chunk_ms_to_frames(args.chunk_ms, hop_ms)
    backends = backend.available() if args.compare_backends else [backend.name()]
    for name in backends:
        with backend.use(name):
            if args.rtf is not None:
                rtf = args.rtf
            else:
                stats = measure_model_rtf(model, args.frames, hop_ms,
                                          repetitions=args.repetitions,
                                          chunk_frames=chunk_frames)
                rtf = stats.median
                print(f"[{name}] rtf_min={stats.minimum:.6f} rtf_median={stats.median:.6f} "
                      f"rtf_max={stats.maximum:.6f}")
            report = build_report(model, args.chunk_ms, rtf, hop_ms, name)
            print("\n".join(report.lines()))
    return 0


def cmd_gradcheck(args) -> int:
    ok = run_suite(emit=print, tolerance=args.tolerance)
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="duovc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"duovc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic corpus")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override corpus seed")
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="train a dual-mode model")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="checkpoint output path (.dvcm)")
    p.add_argument("--log", help="CSV loss-log path (default: beside checkpoint)")
    p.add_argument("--seed", type=int, help="override model+train seed")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("convert", help="offline conversion of a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--speaker", type=int, required=True)
    p.add_argument("--mode", choices=["streaming", "non-streaming"], default="streaming")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("stream", help="chunked conversion with per-chunk timing")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--speaker", type=int, required=True)
    p.add_argument("--chunk-ms", type=float, default=160.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_stream)

    p = sub.add_parser("verify", help="check chunked == offline streaming inference")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--chunk-frames", default="1,4,16")
    p.add_argument("--speaker", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="measure RTF, predicted latency, FLOPs")
    p.add_argument("--model", required=True)
    p.add_argument("--chunk-ms", type=float, default=160.0)
    p.add_argument("--hop-ms", type=float, default=12.5)
    p.add_argument("--frames", type=int, default=800)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--rtf", type=float, help="skip measurement and use this RTF")
    p.add_argument("--compare-backends", action="store_true",
                   help="measure under both the compiled and python kernels")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--tolerance", type=float, default=TOLERANCE)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DuoVCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
