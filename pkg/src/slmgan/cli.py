"""Command line entry point: ``slmgan <command> ...`` (also ``python -m slmgan``).

Commands
    ingest            split a speaker/utterance WAV tree into a JSON manifest
    make-toy-data     write the synthetic multi-speaker corpus used for testing
    init-config       write a run config (full-scale or toy preset)
    train             train (resuming from the latest checkpoint if present)
    convert           convert a source utterance to a reference speaker's voice
    analyze-weights   per-layer importance of the SLM critic's projection head, as CSV
    bench-rtf         real-time factor of conversion on this machine, as JSON

The default data root for ``ingest`` and ``make-toy-data`` comes from the
``SLMGAN_DATA_ROOT`` environment variable. Validation failures exit with
status 2 and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import torch

from .config import DATA_ROOT_ENV, RunConfig, load_config, save_config, toy_config
from .validation import ConfigurationError, InvalidInputError, TrainingDivergedError

log = logging.getLogger("slmgan")


def _data_root(arg):
    root = arg or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise ConfigurationError(f"no data root given (pass --root or set {DATA_ROOT_ENV})")
    return root


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_ingest(args):
    from .data import ingest

    out = args.out or Path(_data_root(args.root)) / "manifest.json"
    manifest = ingest(_data_root(args.root), seed=args.seed, unseen_fraction=args.unseen_fraction, out_path=out)
    print(f"{len(manifest.seen_speakers)} seen / {len(manifest.unseen_speakers)} unseen speakers -> {out}")


def cmd_make_toy_data(args):
    from .data import write_synthetic_corpus

    root = write_synthetic_corpus(
        args.out or _data_root(None), n_speakers=args.speakers, n_utterances=args.utterances,
        seconds=args.seconds, seed=args.seed,
    )
    print(root)


def cmd_init_config(args):
    cfg = toy_config() if args.toy else RunConfig()
    changes = {"seed": args.seed}
    if args.dataset:
        changes["dataset"] = args.dataset
    if args.run_dir:
        changes["out_dir"] = args.run_dir
    save_config(cfg.replace(**changes), args.out)
    print(args.out)


def cmd_train(args):
    from .training import run_training

    cfg = _config(args)
    if args.out:
        cfg = cfg.replace(out_dir=args.out)
    if args.epochs is not None:
        cfg = cfg.replace(schedule__total_epochs=args.epochs)
    ckpt = run_training(cfg, resume=not args.restart, stop_after_epoch=args.stop_after, device=args.device)
    print(ckpt)


def _models(args):
    from .checkpoint import load_models

    if not args.checkpoint:
        raise ConfigurationError("--checkpoint is required")
    models = load_models(args.checkpoint, args.device)
    if args.config:
        cfg = load_config(args.config)
        if cfg.audio != models.config.audio or cfg.network != models.config.network:
            raise ConfigurationError("--config disagrees with the checkpoint's audio/network settings")
    return models


def cmd_convert(args):
    from .inference import convert_file

    if not args.out:
        raise ConfigurationError("--out is required")
    out = convert_file(_models(args), args.source, args.reference, args.out)
    print(f"{args.out} ({len(out)} samples @ {out.sample_rate_hz} Hz)")


def cmd_analyze_weights(args):
    from .inference import analyze_weights

    importance = analyze_weights(_models(args), args.out, norm=args.norm)
    if not args.out:
        print("layer_index,importance")
        for i, v in enumerate(importance):
            print(f"{i},{float(v)!r}")
    else:
        print(args.out)


def cmd_bench_rtf(args):
    from .inference import bench_rtf

    report = bench_rtf(_models(args), args.wavs, args.reference, args.device)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--checkpoint", help="checkpoint or run directory")
    common.add_argument("--out", help="output path")
    common.add_argument("--device", default="cpu")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="slmgan", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a dataset manifest")
    p.add_argument("root", nargs="?", help=f"speaker directory tree (default ${DATA_ROOT_ENV})")
    p.add_argument("--unseen-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_ingest, seed_default=0)

    p = sub.add_parser("make-toy-data", parents=[common], help="write a synthetic corpus")
    p.add_argument("--speakers", type=int, default=4)
    p.add_argument("--utterances", type=int, default=10)
    p.add_argument("--seconds", type=float, default=2.0)
    p.set_defaults(func=cmd_make_toy_data, seed_default=0)

    p = sub.add_parser("init-config", parents=[common], help="write a run config")
    p.add_argument("--toy", action="store_true", help="small preset that trains on a CPU in minutes")
    p.add_argument("--dataset", help="manifest path to record in the config")
    p.add_argument("--run-dir", help="training output directory to record in the config")
    p.set_defaults(func=cmd_init_config, seed_default=0)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--epochs", type=int, default=None, help="override total epochs")
    p.add_argument("--stop-after", type=int, default=None, help="stop after this many completed epochs")
    p.add_argument("--restart", action="store_true", help="ignore existing checkpoints")
    p.set_defaults(func=cmd_train, seed_default=None)

    p = sub.add_parser("convert", parents=[common], help="voice conversion")
    p.add_argument("source")
    p.add_argument("reference")
    p.set_defaults(func=cmd_convert, seed_default=None)

    p = sub.add_parser("analyze-weights", parents=[common], help="projection-head layer importance CSV")
    p.add_argument("--norm", choices=("fro", "l1"), default="fro")
    p.set_defaults(func=cmd_analyze_weights, seed_default=None)

    p = sub.add_parser("bench-rtf", parents=[common], help="real-time factor JSON")
    p.add_argument("wavs", nargs="+")
    p.add_argument("--reference", help="reference utterance (default: first input)")
    p.set_defaults(func=cmd_bench_rtf, seed_default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None and args.seed_default is not None:
        args.seed = args.seed_default
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    torch.set_num_threads(1)
    try:
        args.func(args)
    except (ConfigurationError, InvalidInputError, IndexError, FileNotFoundError) as exc:
        print(f"slmgan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"slmgan {args.command}: training diverged: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
