"""``unclip`` command line: effects, declipping, corpora, training and evaluation."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, aspade, corpus, effects, harness, irm
from .effects import DistortionSpec
from .metrics import si_sdr
from .neural import ModelSpec, TrainConfig, infer, init_params, load_model, log_to_csv, save_model, train
from .reliability import PCM16_SLACK, estimate_threshold
from .signal import CANONICAL_RATE, AudioFormatError, Signal, read_wav, resample, write_wav

log = logging.getLogger("unclip")

EFFECTS = {"hardclip": "hardclip", "tanh": "tanh", "overdrive": "overdrive"}


class UsageError(Exception):
    pass


def _global_options() -> argparse.ArgumentParser:
    # accepted before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    p.add_argument("--sample-rate", type=int, default=argparse.SUPPRESS,
                   help=f"working sample rate in Hz (default {CANONICAL_RATE})")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker threads (default 1)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _load(path, args) -> Signal:
    sig = read_wav(path)
    return resample(sig, args.sample_rate)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _effect_spec(args, gain_db: float = 0.0) -> DistortionSpec:
    return DistortionSpec(EFFECTS[args.effect], gain_db, args.threshold, args.alpha, args.colour)


def cmd_fx(args) -> int:
    spec = _effect_spec(args, args.gain_db)
    x = _load(args.input, args)
    write_wav(effects.apply(x, spec), args.output, args.format)
    print(_dump(spec.to_dict()))
    return 0


def cmd_declip(args) -> int:
    if args.method == "irm" and not args.reference:
        raise UsageError("--method irm requires --reference")
    if args.method == "neural" and not args.model:
        raise UsageError("--method neural requires --model")
    y = _load(args.input, args)
    report: dict = {"method": args.method, "input": str(args.input), "output": str(args.output)}
    if args.method == "aspade":
        cfg = aspade.AspadeConfig(frame_len=args.frame_len, hop=args.hop, epsilon=args.epsilon)
        theta = args.threshold
        if theta is None:
            theta = estimate_threshold(y, args.slack)
        out, rep = aspade.declip_signal(y, theta, cfg, slack=args.slack, jobs=args.jobs)
        report.update(threshold=theta, slack=args.slack, config=cfg.to_dict(), solver=rep.to_dict(), rtf=rep.rtf)
    elif args.method == "irm":
        ref = _load(args.reference, args)
        stats = harness.measure_rtf(lambda s: irm.apply_oracle(ref, s), y, repeats=3)
        out = irm.apply_oracle(ref, y)
        report.update(reference=str(args.reference), clamp_max=irm.CLAMP_MAX, rtf=stats.median,
                      si_sdr_in=si_sdr(ref, y).value, si_sdr_out=si_sdr(ref, out).value)
    else:
        params = load_model(args.model)
        res = infer(params, y)
        out = res.signal
        report.update(model=str(args.model), model_spec=params.spec.to_dict(), rtf=res.rtf)
    write_wav(out, args.output, args.format)
    report_path = Path(args.report) if args.report else Path(str(args.output) + ".json")
    report_path.write_text(_dump(report) + "\n", encoding="utf-8")
    return 0


def cmd_corpus(args) -> int:
    if args.corpus_cmd == "tones":
        m = corpus.synth_tones(args.out_dir, args.count, args.seed, args.sample_rate)
    elif args.corpus_cmd == "synth":
        if args.mode == "gain-grid":
            m = corpus.synth_gain_grid(args.clean, _effect_spec(args), args.out_dir, args.seed,
                                       args.n_gains, tuple(args.gain_range))
        else:
            m = corpus.synth_target_sdr(args.clean, tuple(args.sdr_range), args.out_dir, args.seed)
    elif args.corpus_cmd == "eval-grid":
        m = corpus.synth_eval_grid(args.clean, args.grid, args.out_dir)
    else:
        m = corpus.split(corpus.read_manifest(args.manifest), tuple(args.ratios), args.seed)
        m.write(args.output or None)
    print(_dump({"entries": len(m.entries), "total_duration_s": m.total_duration,
                 "manifest": str(m.root / corpus.MANIFEST_NAME) if args.corpus_cmd != "split"
                 else str(args.output or m.root / corpus.MANIFEST_NAME)}))
    return 0


def _train_config(args) -> TrainConfig:
    base = TrainConfig.full if args.full_protocol else TrainConfig
    overrides = {k: v for k, v in {
        "segment_len": args.segment_len, "batch_size": args.batch_size, "lr_init": args.lr,
        "plateau_patience": args.patience, "max_epochs": args.epochs}.items() if v is not None}
    return base(seed=args.seed, **overrides)


def cmd_train(args) -> int:
    m = corpus.read_manifest(args.manifest)
    cfg = _train_config(args)
    params, history = train(m, ModelSpec(), cfg)
    save_model(params, args.model_out)
    log_path = Path(args.log_out) if args.log_out else Path(str(args.model_out) + ".log.csv")
    log_path.write_text(log_to_csv(history), encoding="utf-8")
    print(_dump({"model": str(args.model_out), "log": str(log_path), "epochs": len(history) - 1,
                 "initial_valid_loss": history[0].valid_loss,
                 "best_valid_loss": min(h.valid_loss for h in history)}))
    return 0


def cmd_init_model(args) -> int:
    save_model(init_params(ModelSpec(), args.seed, np.float32), args.output)
    return 0


def cmd_eval(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if "neural" in methods and not args.model:
        raise UsageError("method neural requires --model")
    model = load_model(args.model) if args.model else None
    m = corpus.read_manifest(args.manifest)
    records, rows = harness.run_eval(m, methods, args.out, model, args.jobs, timing=not args.no_timing)
    print(_dump({"records": len(records), "records_csv": str(args.out),
                 "summary_csv": str(harness.summary_path(args.out))}))
    return 0


def cmd_study(args) -> int:
    cfg = _train_config(args)
    rows = harness.superposition_study(args.clean, args.alphas, args.out, args.work_dir, ModelSpec(), cfg, args.seed)
    print(_dump([{"method": r.method, "alpha": r.condition, "median_si_sdr_db": r.median, "count": r.count}
                 for r in rows]))
    return 0


def cmd_bench(args) -> int:
    if args.input:
        clip = _load(args.input, args)
    else:
        rng = np.random.default_rng(args.seed)
        n = int(args.seconds * args.sample_rate)
        tone = np.concatenate([corpus.tone_clip(rng, sample_rate=args.sample_rate)
                               for _ in range(-(-n // (2 * args.sample_rate)))])[:n]
        from .metrics import solve_threshold_for_target_sdr
        theta = solve_threshold_for_target_sdr(tone, 7.0).theta
        clip = Signal(np.clip(tone, -theta, theta), args.sample_rate)
    params = load_model(args.model) if args.model else init_params(ModelSpec(), args.seed, np.float32)
    theta = args.threshold or estimate_threshold(clip)
    results = {
        "clip_seconds": clip.duration,
        "aspade": harness.measure_rtf(lambda s: aspade.declip_signal(s, theta), clip, args.repeats).to_dict(),
        "neural": harness.measure_rtf(lambda s: infer(params, s), clip, args.repeats).to_dict(),
    }
    print(_dump(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(prog="unclip", parents=[common],
                                     description="Distortion synthesis, declipping and evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def effect_opts(p, gain_required):
        p.add_argument("--effect", choices=sorted(EFFECTS), default="hardclip")
        if gain_required:
            p.add_argument("--gain-db", type=float, required=True)
        p.add_argument("--alpha", type=float, default=1.0, help="wet weight in [0, 1]")
        p.add_argument("--threshold", type=float, default=1.0, help="clipping threshold")
        p.add_argument("--colour", type=float, default=20.0, help="overdrive colour")

    p = sub.add_parser("fx", parents=[common], help="apply a distortion effect")
    effect_opts(p, True)
    p.add_argument("--format", choices=["float32", "pcm16"], default="float32")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_fx)

    p = sub.add_parser("declip", parents=[common], help="restore a clipped or distorted file")
    p.add_argument("--method", choices=["aspade", "irm", "neural"], required=True)
    p.add_argument("--model")
    p.add_argument("--reference")
    p.add_argument("--threshold", type=float, help="clipping level (estimated when omitted)")
    p.add_argument("--slack", type=float, default=0.0,
                   help=f"relative detection slack, e.g. {PCM16_SLACK} for 16-bit input")
    p.add_argument("--frame-len", type=int, default=1024)
    p.add_argument("--hop", type=int, default=256)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--format", choices=["float32", "pcm16"], default="float32")
    p.add_argument("--report", help="JSON report path (default OUTPUT.json)")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_declip)

    p = sub.add_parser("corpus", parents=[common], help="dataset synthesis")
    csub = p.add_subparsers(dest="corpus_cmd", required=True)
    c = csub.add_parser("tones", parents=[common], help="synthetic clean clips")
    c.add_argument("--count", type=int, default=20)
    c.add_argument("out_dir")
    c = csub.add_parser("synth", parents=[common], help="degraded pairs from clean audio")
    c.add_argument("--mode", choices=["gain-grid", "target-sdr"], default="gain-grid")
    effect_opts(c, False)
    c.add_argument("--n-gains", type=int, default=5)
    c.add_argument("--gain-range", type=float, nargs=2, default=list(corpus.DEFAULT_GAIN_RANGE))
    c.add_argument("--sdr-range", type=float, nargs=2, default=[1.0, 20.0])
    c.add_argument("clean", help="directory of WAVs or a manifest")
    c.add_argument("out_dir")
    c = csub.add_parser("eval-grid", parents=[common], help="clip every clip at every input SDR")
    c.add_argument("--grid", type=float, nargs="+", default=list(corpus.EVAL_GRID))
    c.add_argument("clean")
    c.add_argument("out_dir")
    c = csub.add_parser("split", parents=[common], help="train/valid/test split by clean clip")
    c.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    c.add_argument("--output", help="manifest to write (default: overwrite input)")
    c.add_argument("manifest")
    p.set_defaults(func=cmd_corpus)

    def train_opts(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--segment-len", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--full-protocol", action="store_true",
                       help="plateau patience 150 and 1000 epochs")

    p = sub.add_parser("train", parents=[common], help="train the neural declipper")
    train_opts(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--log-out")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("init-model", parents=[common], help="write an untrained identity model")
    p.add_argument("output")
    p.set_defaults(func=cmd_init_model)

    p = sub.add_parser("eval", parents=[common], help="score methods on a manifest's test split")
    p.add_argument("--methods", default="input,aspade,irm")
    p.add_argument("--model")
    p.add_argument("--out", required=True, help="records CSV; summary goes to *_summary.csv")
    p.add_argument("--no-timing", action="store_true", help="leave rtf empty for reproducible CSVs")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("study", parents=[common], help="experiments")
    ssub = p.add_subparsers(dest="study_cmd", required=True)
    s = ssub.add_parser("superposition", parents=[common], help="dry/wet blend study")
    train_opts(s)
    s.add_argument("--alphas", type=float, nargs="+", default=[1.0, 0.5])
    s.add_argument("--work-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("clean")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("bench", parents=[common], help="benchmarks")
    bsub = p.add_subparsers(dest="bench_cmd", required=True)
    b = bsub.add_parser("rtf", parents=[common], help="real-time factors of A-SPADE and the neural model")
    b.add_argument("--model")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seconds", type=float, default=10.0)
    b.add_argument("--threshold", type=float)
    b.add_argument("input", nargs="?")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", 0), ("sample_rate", CANONICAL_RATE), ("jobs", 1), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"unclip: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, AudioFormatError, ValueError) as exc:
        print(f"unclip: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
