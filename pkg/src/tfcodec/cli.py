"""Command-line front end.

Exit codes: 0 success, 2 bad arguments or insufficient data, 3 I/O
failure, 4 unsupported file format, 5 corrupt stream. Diagnostics go to
stderr as a single line; reports go to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bitstream, complexity, losses, model, rvq
from .errors import ConfigError, CorruptStreamError, UsageError, WeightFileError
from .nn import WeightStore
from .wav import WavFormatError, read_wav, write_wav

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_FORMAT, EXIT_CORRUPT = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load_weights(path):
    try:
        return WeightStore.load(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read weights {path}: {exc.strerror or exc}") from None
    except WeightFileError as exc:
        raise CliError(EXIT_FORMAT, f"{path}: {exc}") from None


def _read_wav(path):
    try:
        return read_wav(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except WavFormatError as exc:
        raise CliError(EXIT_FORMAT, str(exc)) from None


def _write(path, data: bytes):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _check_layers(n):
    if n is not None and not 1 <= n <= bitstream.MAX_LAYERS:
        raise CliError(EXIT_ARGS, f"--layers must be between 1 and {bitstream.MAX_LAYERS}, got {n}")


def cmd_init(args):
    weights = model.init_weights(seed=args.seed)
    _write(args.out, weights.to_bytes())
    print(f"wrote {len(weights)} tensors, {weights.num_params():,} parameters")


def cmd_encode(args):
    _check_layers(args.layers)
    samples = _read_wav(args.input)
    weights = _load_weights(args.weights)
    codes = model.encode_codes(samples, weights, args.layers)
    header = bitstream.StreamHeader(n_layers=args.layers)
    _write(args.out, bitstream.pack(codes, header))
    print(f"{len(codes)} frames, {header.information_bps / 1000:.1f} kbps")


def cmd_decode(args):
    _check_layers(args.layers)
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.input}: {exc.strerror or exc}") from None
    weights = _load_weights(args.weights)
    try:
        header = bitstream.read_header(data)
        if args.layers is not None:
            if args.layers > header.n_layers:
                raise CliError(
                    EXIT_ARGS, f"--layers {args.layers} exceeds the stream's {header.n_layers} layers"
                )
            data = bitstream.strip_layers(data, args.layers)
        header, codes = bitstream.unpack(data)
        audio = model.decode(codes, header.n_layers, weights)
    except CorruptStreamError as exc:
        raise CliError(EXIT_CORRUPT, f"corrupt stream: {exc}") from None
    try:
        write_wav(args.out, audio)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc.strerror or exc}") from None
    print(f"{len(codes)} frames, {len(audio)} samples, {len(audio) / 24000:.3f} s")


def cmd_fit(args):
    folder = Path(args.latents_from)
    if not folder.is_dir():
        raise CliError(EXIT_IO, f"not a directory: {folder}")
    files = sorted(folder.glob("*.wav"))
    if not files:
        raise CliError(EXIT_ARGS, f"no .wav files in {folder}")
    weights = _load_weights(args.weights)
    # files in sorted order so the concatenated training set is reproducible
    latents = [model.encode(_read_wav(f), weights) for f in files]
    books = model.load_codebooks(weights)
    try:
        fitted, report = rvq.fit_codebooks(latents, books, seed=args.seed, iterations=args.iterations)
    except ConfigError as exc:
        raise CliError(EXIT_ARGS, str(exc)) from None
    _write(args.out or args.weights, weights.updated(fitted.to_tensors()).to_bytes())
    for s, err in enumerate(report.final_errors):
        print(f"stage {s + 1}: training quantization error {err:.3e}")


def _metrics(audio, ref):
    n = min(len(audio), len(ref))
    audio, ref = audio[:n], ref[:n]
    parts = losses.se_components(audio, ref)
    return {
        "si_snr_loss": parts.si_snr,
        "mag_loss": parts.mag,
        "real_loss": parts.real,
        "imag_loss": parts.imag,
        "se_total": losses.weighted_se_total(parts),
        "mel_loss": losses.mel_loss(audio, ref),
    }


def cmd_analyze(args):
    weights = _load_weights(args.weights)
    report = complexity.count_graph(cascade_lookahead_ms=args.lookahead_ms)
    worst = complexity.count_graph(context="limit", cascade_lookahead_ms=args.lookahead_ms)
    metrics = None
    if (args.audio is None) != (args.ref is None):
        raise CliError(EXIT_ARGS, "--audio and --ref must be given together")
    if args.audio is not None:
        metrics = _metrics(_read_wav(args.audio), _read_wav(args.ref))
    params = complexity.count_params(weights)
    if args.json:
        doc = {
            "complexity": report.to_dict(),
            "context_limit_totals": worst.to_dict()["totals"],
            "weight_file_params": params,
        }
        if metrics is not None:
            doc["metrics"] = metrics
        print(json.dumps(doc, indent=2, sort_keys=True))
        return
    print(complexity.format_table(report))
    print(
        f"at the {worst.attention_context:g}-frame context limit: "
        f"{worst.total_macs_per_second:,} MACs/s total, "
        f"{worst.receiver_macs_per_second:,} MACs/s receiver"
    )
    print(f"weight file parameters: {params:,}")
    if metrics is not None:
        for name, value in metrics.items():
            print(f"{name}: {value:.6g}")


def build_parser():
    p = argparse.ArgumentParser(prog="tfcodec", description="Low-latency neural speech codec runtime")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="write deterministic untrained weights")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("encode", help="WAV -> VOC1 stream")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--layers", type=int, default=6)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help="VOC1 stream -> WAV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--layers", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("fit", help="fit RVQ codebooks on encoder latents of a WAV folder")
    s.add_argument("--latents-from", required=True)
    s.add_argument("--weights", required=True)
    s.add_argument("--out", default=None, help="output weight file (default: overwrite --weights)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iterations", type=int, default=20)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("analyze", help="complexity, latency and optional quality metrics")
    s.add_argument("--weights", required=True)
    s.add_argument("--audio")
    s.add_argument("--ref")
    s.add_argument("--lookahead-ms", type=float, default=0.0)
    s.add_argument("--json", action="store_true", help="machine-readable output")
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"tfcodec {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except UsageError as exc:
        print(f"tfcodec {args.command}: {exc}", file=sys.stderr)
        return EXIT_ARGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
