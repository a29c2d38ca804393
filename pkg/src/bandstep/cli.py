"""Command-line surface: resample, train, extend, eval, bench, info,
print-default-config, and serve.

Heavy modules load inside each command handler so ``--help`` and usage
errors stay instant.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """Parser whose usage failures exit with code 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), max((len(r[i]) for r in rows), default=0))
              for i, h in enumerate(headers)]
    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


# ---- command handlers --------------------------------------------------

def cmd_resample(args) -> int:
    from .dsp import sinc_resample
    from .wavio import read_wav, write_wav

    wav = read_wav(args.input)
    out = sinc_resample(wav, args.rate)
    write_wav(args.output, out, args.encoding)
    print(f"input:  {wav.rate} Hz, {wav.duration:.3f} s, {len(wav)} samples")
    print(f"output: {out.rate} Hz, {out.duration:.3f} s, {len(out)} samples")
    print(f"wrote {args.output}")
    return EXIT_OK


def _load_base_config(args):
    from .config import RunConfig, desk_preset, load_run_config

    if args.config is not None:
        return load_run_config(args.config)
    return desk_preset() if args.desk else RunConfig()


def cmd_train(args) -> int:
    from .train import train_from_config

    cfg = _load_base_config(args)
    overrides = {
        "steps": args.steps, "seed": args.seed,
        "checkpoint_dir": args.checkpoint_dir,
        "checkpoint_interval": args.checkpoint_interval,
        "metrics_path": args.metrics_path, "resume": args.resume,
        "log_every": args.log_every,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(cfg.train, name, value)
    if args.deterministic:
        cfg.train.deterministic = True

    result = train_from_config(cfg)
    first, last = result.history[0], result.history[-1]
    print(f"trained {len(result.history)} steps: "
          f"g_loss {first['g_loss']:.4f} -> {last['g_loss']:.4f}, "
          f"amp {first['amp']:.4f} -> {last['amp']:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_extend(args) -> int:
    from .checkpoint import load_model
    from .errors import InvalidArgumentError
    from .model import extend_waveform
    from .wavio import read_wav, write_wav

    wav = read_wav(args.input)
    src = args.src_rate if args.src_rate is not None else wav.rate
    if src >= args.tgt_rate:
        raise InvalidArgumentError(
            f"--from rate {src} must be below --to rate {args.tgt_rate}")
    if wav.rate != src:
        raise InvalidArgumentError(
            f"{args.input} is at {wav.rate} Hz but --from says {src}; "
            f"resample it first")
    model, ckpt = load_model(args.checkpoint)
    out = extend_waveform(model, wav, src, args.tgt_rate)
    write_wav(args.output, out, args.encoding)
    cfg = model.config
    stages = cfg.stage_index(args.tgt_rate) - cfg.stage_index(src)
    print(f"stages: {stages}")
    print(f"input:  {wav.rate} Hz, {wav.duration:.3f} s")
    print(f"output: {out.rate} Hz, {out.duration:.3f} s")
    print(f"wrote {args.output}")
    return EXIT_OK


def _list_wavs(directory: str) -> dict[str, str]:
    import os

    from .errors import DataError

    try:
        names = sorted(n for n in os.listdir(directory)
                       if n.lower().endswith(".wav"))
    except OSError as exc:
        raise DataError(f"cannot list {directory}: {exc}") from exc
    if not names:
        raise DataError(f"no .wav files in {directory}")
    return {n: os.path.join(directory, n) for n in names}


def _eval_pairs(args) -> tuple[list[str], list[list[str]]]:
    """Compare matching files from --ref and --est directories."""
    import numpy as np

    from .errors import DataError
    from .metrics import LsdConfig, lsd, lsd_band, spectral_snr
    from .wavio import read_wav

    refs, ests = _list_wavs(args.ref), _list_wavs(args.est)
    if refs.keys() != ests.keys():
        missing = sorted(refs.keys() - ests.keys())
        extra = sorted(ests.keys() - refs.keys())
        parts = []
        if missing:
            parts.append(f"missing from --est: {', '.join(missing)}")
        if extra:
            parts.append(f"only in --est: {', '.join(extra)}")
        raise DataError("file lists do not pair up: " + "; ".join(parts))

    cfg = LsdConfig()
    headers = ["file", "lsd", "snr_db"]
    if args.band:
        headers.append("lsd_band")
    rows, sums = [], np.zeros(len(headers) - 1)
    for name in refs:
        ref, est = read_wav(refs[name]), read_wav(ests[name])
        vals = [lsd(ref, est, cfg), spectral_snr(ref, est, cfg)]
        if args.band:
            vals.append(lsd_band(ref, est, cfg, args.band[0], args.band[1]))
        sums += vals
        rows.append([name] + [f"{v:.4f}" for v in vals])
    rows.append(["mean"] + [f"{v:.4f}" for v in sums / len(refs)])
    return headers, rows


def _eval_checkpoint(args) -> tuple[list[str], list[list[str]]]:
    """Run the cascade against the sinc baseline on reference clips."""
    import numpy as np

    from .checkpoint import load_model
    from .data import SynthCorpusSpec, synth_corpus
    from .dsp import sinc_resample
    from .errors import DataError
    from .metrics import LsdConfig, lsd, spectral_snr
    from .model import extend_waveform
    from .wavio import read_wav

    model, _ = load_model(args.checkpoint)
    if args.ref is not None:
        refs = []
        for name, path in _list_wavs(args.ref).items():
            wav = read_wav(path)
            if wav.rate < args.tgt_rate:
                raise DataError(
                    f"{path} is at {wav.rate} Hz; references must be at "
                    f"least the --to rate {args.tgt_rate}")
            if wav.rate > args.tgt_rate:
                wav = sinc_resample(wav, args.tgt_rate)
            refs.append((name, wav))
    else:
        spec = SynthCorpusSpec(n_clips=args.n_clips,
                               duration=args.clip_seconds,
                               rate=args.tgt_rate, seed=args.seed)
        refs = [(f"clip-{i:03d}", wav)
                for i, wav in enumerate(synth_corpus(spec))]

    cfg = LsdConfig()
    headers = ["clip", "lsd_model", "lsd_sinc", "snr_model"]
    rows, sums = [], np.zeros(3)
    for name, ref in refs:
        low = sinc_resample(ref, args.src_rate)
        est_model = extend_waveform(model, low, args.src_rate, args.tgt_rate)
        est_sinc = sinc_resample(low, args.tgt_rate)
        vals = [lsd(ref, est_model, cfg), lsd(ref, est_sinc, cfg),
                spectral_snr(ref, est_model, cfg)]
        sums += vals
        rows.append([name] + [f"{v:.4f}" for v in vals])
    rows.append(["mean"] + [f"{v:.4f}" for v in sums / len(refs)])
    return headers, rows


def cmd_eval(args) -> int:
    from .errors import InvalidArgumentError
    from .wavio import atomic_write_text

    if args.checkpoint is not None:
        if args.src_rate is None or args.tgt_rate is None:
            raise InvalidArgumentError(
                "--checkpoint evaluation needs --from and --to")
        if args.est is not None:
            raise InvalidArgumentError(
                "--est does not apply with --checkpoint (the model output "
                "is the estimate)")
        headers, rows = _eval_checkpoint(args)
    else:
        if args.ref is None or args.est is None:
            raise InvalidArgumentError(
                "directory evaluation needs --ref and --est "
                "(or use --checkpoint with --from/--to)")
        headers, rows = _eval_pairs(args)

    table = _format_table(headers, rows)
    print(table)
    if args.out:
        atomic_write_text(args.out, table + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import rtf_benchmark
    from .checkpoint import load_model
    from .data import SynthCorpusSpec, synth_corpus

    model, _ = load_model(args.checkpoint)
    clips = synth_corpus(SynthCorpusSpec(
        n_clips=args.n_clips, duration=args.clip_seconds,
        rate=args.src_rate, seed=args.seed))
    report = rtf_benchmark(model, args.src_rate, args.tgt_rate, clips,
                           repeats=args.repeats, threads=args.threads)
    print(report.as_json() if args.json else report.as_text())
    return EXIT_OK


def cmd_info(args) -> int:
    import yaml

    from .checkpoint import load_model
    from .model import config_to_dict

    model, ckpt = load_model(args.checkpoint)
    total = model.num_parameters()
    print(f"checkpoint: {args.checkpoint}")
    print(f"step: {ckpt.step}")
    print(f"parameters: {total:,}")
    rates = model.config.rates
    for i, block in enumerate(model.blocks):
        n = block.num_parameters()
        print(f"  block.{i} ({rates[i]} -> {rates[i + 1]} Hz): "
              f"{n:,} ({100.0 * n / total:.1f}%)")
    print("config:")
    dumped = yaml.safe_dump(config_to_dict(ckpt.config), sort_keys=False)
    print("  " + dumped.rstrip().replace("\n", "\n  "))
    return EXIT_OK


def cmd_print_default_config(args) -> int:
    from .config import RunConfig, desk_preset, dump_run_config

    cfg = desk_preset() if args.desk else RunConfig()
    print(dump_run_config(cfg), end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port,
                log_level="info")
    return EXIT_OK


# ---- parser ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bandstep",
                description="Staged speech bandwidth extension: train, "
                            "apply, and benchmark spectrum-painting "
                            "cascades.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    sp = sub.add_parser("resample", parents=[], help="sinc-resample a WAV file")
    sp.add_argument("input", help="input .wav path")
    sp.add_argument("output", help="output .wav path")
    sp.add_argument("--rate", type=int, required=True,
                    help="target sampling rate in Hz")
    sp.add_argument("--encoding", choices=("float32", "pcm16"),
                    default="float32", help="output sample encoding")
    sp.set_defaults(func=cmd_resample)

    sp = sub.add_parser("train", help="train a cascade")
    sp.add_argument("--config", help="YAML run config (defaults otherwise)")
    sp.add_argument("--desk", action="store_true",
                    help="start from the desk-scale preset instead of the "
                         "full-scale defaults")
    sp.add_argument("--steps", type=int, help="override train.steps")
    sp.add_argument("--seed", type=int, help="override train.seed")
    sp.add_argument("--deterministic", action="store_true",
                    help="single-threaded, bitwise-reproducible run")
    sp.add_argument("--checkpoint-dir", help="override train.checkpoint_dir")
    sp.add_argument("--checkpoint-interval", type=int,
                    help="override train.checkpoint_interval")
    sp.add_argument("--metrics-path", help="override train.metrics_path")
    sp.add_argument("--resume", help="checkpoint to resume from")
    sp.add_argument("--log-every", type=int, help="progress print interval")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("extend", help="extend a WAV file's bandwidth")
    sp.add_argument("input", help="input .wav path")
    sp.add_argument("output", help="output .wav path")
    sp.add_argument("--checkpoint", required=True, help="trained model file")
    sp.add_argument("--from", dest="src_rate", type=int,
                    help="source ladder rate (default: input header rate)")
    sp.add_argument("--to", dest="tgt_rate", type=int, required=True,
                    help="target ladder rate")
    sp.add_argument("--encoding", choices=("float32", "pcm16"),
                    default="float32", help="output sample encoding")
    sp.set_defaults(func=cmd_extend)

    sp = sub.add_parser("eval", help="score estimates against references")
    sp.add_argument("--ref", help="directory of reference .wav files")
    sp.add_argument("--est", help="directory of estimate .wav files")
    sp.add_argument("--checkpoint",
                    help="score this model against the sinc baseline "
                         "instead of an --est directory")
    sp.add_argument("--from", dest="src_rate", type=int,
                    help="source ladder rate (checkpoint mode)")
    sp.add_argument("--to", dest="tgt_rate", type=int,
                    help="target ladder rate (checkpoint mode)")
    sp.add_argument("--band", nargs=2, type=float, metavar=("LO", "HI"),
                    help="also report LSD restricted to [LO, HI] Hz")
    sp.add_argument("--n-clips", type=int, default=8,
                    help="synthetic clips when no --ref is given")
    sp.add_argument("--clip-seconds", type=float, default=0.5,
                    help="synthetic clip duration")
    sp.add_argument("--seed", type=int, default=0,
                    help="synthetic corpus seed")
    sp.add_argument("--out", help="also write the table to this file")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="measure the real-time factor")
    sp.add_argument("--checkpoint", required=True, help="trained model file")
    sp.add_argument("--from", dest="src_rate", type=int, required=True,
                    help="source ladder rate")
    sp.add_argument("--to", dest="tgt_rate", type=int, required=True,
                    help="target ladder rate")
    sp.add_argument("--threads", type=int, default=1,
                    help="BLAS/FFT thread cap during timing")
    sp.add_argument("--repeats", type=int, default=5,
                    help="timed passes (median is reported)")
    sp.add_argument("--n-clips", type=int, default=4,
                    help="synthetic clips per pass")
    sp.add_argument("--clip-seconds", type=float, default=1.0,
                    help="synthetic clip duration")
    sp.add_argument("--seed", type=int, default=0,
                    help="synthetic corpus seed")
    sp.add_argument("--json", action="store_true",
                    help="print the report as one JSON line")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("info", help="describe a checkpoint")
    sp.add_argument("checkpoint", help="checkpoint path")
    sp.set_defaults(func=cmd_info)

    sp = sub.add_parser("print-default-config",
                        help="emit the default run config as YAML")
    sp.add_argument("--desk", action="store_true",
                    help="emit the desk-scale preset instead")
    sp.set_defaults(func=cmd_print_default_config)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    from .errors import DataError, InvalidArgumentError, NumericError

    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:  # includes checkpoint problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
