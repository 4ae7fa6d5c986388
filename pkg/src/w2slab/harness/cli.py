"""Command-line entry point: ``w2slab <subcommand> --config exp.json``.

Exit status: 0 on success, 2 on configuration errors, 3 when training aborts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from ..data import data_root
from ..errors import CheckpointError, ConfigError, ParseError, TrainingAborted
from ..training import evaluate, load_checkpoint
from .config import ExperimentConfig, load_config, load_data
from .experiment import run_experiment
from .report import emit_report, load_results

EXIT_OK, EXIT_CONFIG, EXIT_ABORTED = 0, 2, 3

SUBCOMMAND_KINDS = {
    "train": ("scratch",),
    "distill": ("w2s_gt", "w2s_nogt"),
    "noise": ("noisy",),
    "fewshot": ("fewshot",),
}

log = logging.getLogger("w2slab")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
    common.add_argument("--out", help="output directory (overrides the config's out_dir)")
    common.add_argument("--data-dir", help="dataset root (overrides $W2S_DATA_DIR)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="w2slab", description="Weak-to-strong distillation lab")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train the strong model from scratch")
    sub.add_parser("distill", parents=[common], help="weak teacher -> strong student (w2s_gt / w2s_nogt)")
    sub.add_parser("noise", parents=[common], help="noisy-label experiment")
    sub.add_parser("fewshot", parents=[common], help="classifier-stage training + episodic evaluation")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the config's test split")
    ev.add_argument("--checkpoint", required=True)
    rep = sub.add_parser("report", parents=[common], help="rebuild reports from run_result.json files")
    rep.add_argument("inputs", nargs="+", help="run directories or run_result.json files")
    return parser


def _config_for(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    allowed = SUBCOMMAND_KINDS.get(args.command)
    if allowed is not None and cfg.kind not in allowed:
        raise ConfigError(f"'{args.command}' runs {'/'.join(allowed)} experiments; config kind is {cfg.kind!r}")
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed])
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _run(args) -> int:
    if args.command in SUBCOMMAND_KINDS:
        cfg = _config_for(args)
        result = run_experiment(cfg, data_dir=args.data_dir)
        print(json.dumps({"run_id": result.run_id, "delta": result.delta(), "out": cfg.out_dir}))
        return EXIT_OK
    if args.command == "eval":
        cfg = _config_for(args)
        ckpt = load_checkpoint(args.checkpoint)
        _, test = load_data(cfg.dataset, args.data_dir)
        print(json.dumps(evaluate(ckpt.to_model(), test)))
        return EXIT_OK
    if args.command == "report":
        results = load_results(args.inputs)
        out = args.out or "report"
        emit_report(results, out)
        print(json.dumps({"runs": len(results), "out": out}))
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.data_dir is None and data_root() is not None:
        log.info("using dataset root %s", data_root())
    try:
        return _run(args)
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (ConfigError, ParseError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
