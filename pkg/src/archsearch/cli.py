"""Command-line entry point: ``archsearch search|retrain|report|dump-dataset``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .harness.checkpoint import CheckpointError
from .harness.config import ConfigError, RunConfig, load_config
from .harness.report import LogFormatError, report
from .harness.retrain import format_rows, retrain_best
from .search_space import ArchitectureError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; usage errors here are 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="archsearch", description="LSTM-controller architecture search (random / REINFORCE / PPO).")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("search", help="run or resume a search")
    s.add_argument("--config", help="JSON run config (defaults are used when omitted)")
    s.add_argument("--mode", choices=("random", "reinforce", "ppo"))
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory for the log and checkpoint")
    s.add_argument("--resume", help="checkpoint to continue from")

    r = sub.add_parser("retrain", help="train an architecture from scratch and report test accuracy")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--arch", help="architecture string, e.g. 'b0;b3<0;b5<0,1'")
    src.add_argument("--from", dest="from_ckpt", help="checkpoint whose best architecture is retrained")
    r.add_argument("--filters", type=int, nargs="+", default=[24])
    r.add_argument("--epochs", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--config", help="JSON run config for dataset and optimizer settings")

    rep = sub.add_parser("report", help="summarize one or more search logs")
    rep.add_argument("logs", nargs="+")
    rep.add_argument("--csv", help="write one row per (mode, seed) here")
    rep.add_argument("--threshold", type=float, default=0.9)

    d = sub.add_parser("dump-dataset", help="write the toy dataset as a flat binary file")
    d.add_argument("--out", required=True)
    d.add_argument("--split", choices=("train", "valid", "test"), default="train")
    d.add_argument("--config", help="JSON run config for dataset settings")
    return p


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_search(args) -> int:
    from .harness.search import run_search

    if args.resume:
        if args.config or args.mode or args.seed is not None:
            raise UsageError("--resume takes its settings from the checkpoint")
        result = run_search(None, resume=args.resume, out_dir=args.out)
    else:
        cfg = _config(args.config)
        changes = {k: v for k, v in (("mode", args.mode), ("seed", args.seed)) if v is not None}
        if changes:
            cfg = cfg.replace(**changes)
        result = run_search(cfg, out_dir=args.out)
    st = result.state
    print(f"{st.epoch} epochs, best reward {st.best_reward:.4f} ({st.best_arch})")
    print(f"log: {result.log_path}\ncheckpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_retrain(args) -> int:
    if any(f <= 0 for f in args.filters) or args.epochs < 0:
        raise UsageError("--filters must be positive and --epochs non-negative")
    cfg = _config(args.config) if args.config else None
    rows = retrain_best(arch=args.arch, checkpoint=args.from_ckpt, filters=args.filters, epochs=args.epochs,
                        seed=args.seed, cfg=cfg)
    print(format_rows(rows))
    return EXIT_OK


def cmd_report(args) -> int:
    print(report(args.logs, tau=args.threshold, csv_path=args.csv))
    return EXIT_OK


def cmd_dump(args) -> int:
    from .evaluators.data import dump_dataset, make_toy_dataset

    cfg = _config(args.config)
    ds = make_toy_dataset(cfg.data_seed, cfg.train_size, cfg.valid_size, cfg.test_size,
                          cfg.image_channels, cfg.image_size, cfg.data_noise)
    dump_dataset(ds, args.out, split=args.split)
    print(f"wrote {args.split} split to {args.out}")
    return EXIT_OK


COMMANDS = {"search": cmd_search, "retrain": cmd_retrain, "report": cmd_report, "dump-dataset": cmd_dump}


def main(argv=None) -> int:
    level = os.environ.get("ARCHSEARCH_LOG_LEVEL", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    if level not in LOG_LEVELS:
        logging.getLogger(__name__).error("ARCHSEARCH_LOG_LEVEL must be one of %s", ", ".join(LOG_LEVELS))
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ArchitectureError) as exc:
        print(f"archsearch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CheckpointError, LogFormatError, FloatingPointError, ValueError) as exc:
        print(f"archsearch: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
