"""Command-line entry point: run, ablation, and inspect subcommands.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
``REPLAYLAB_LOG`` controls log verbosity (DEBUG/INFO/WARNING/...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import load_run_config
from .errors import ConfigError, ReplayLabError
from .runner import execute_ablation, execute_run, format_ablation_table, parse_matrix

logger = logging.getLogger("replaylab")


def _setup_logging() -> None:
    level = os.environ.get("REPLAYLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replaylab",
        description="Continual-learning experiments with batch-level replay")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one configured run")
    run.add_argument("--config", required=True, help="path to a run config file")
    run.add_argument("--seed", type=int, default=None,
                     help="override the master seed")
    run.add_argument("--out", default=None, help="output directory for artifacts")

    ablation = sub.add_parser("ablation", help="run a strategies x seeds matrix")
    ablation.add_argument("--matrix", required=True, help="path to a matrix file")
    ablation.add_argument("--out", default=None, help="output directory")
    ablation.add_argument("--workers", type=int, default=1,
                          help="parallel worker processes (default 1)")
    ablation.add_argument("--keep-runs", action="store_true",
                          help="keep per-arm artifact directories")

    inspect = sub.add_parser("inspect", help="print the five metrics of a run")
    inspect.add_argument("--run", required=True, help="run output directory")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = {"seed": str(args.seed)} if args.seed is not None else None
    cfg = load_run_config(args.config, overrides)
    summary, _ = execute_run(cfg, args.out)
    print(f"strategy={summary.strategy} seed={summary.seed} "
          f"avg_val_acc={summary.avg_val_acc:.4f} final_acc={summary.final_acc:.4f}")
    if summary.out_dir:
        print(f"artifacts written to {summary.out_dir}")
    return 0


def _cmd_ablation(args: argparse.Namespace) -> int:
    path = Path(args.matrix)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read matrix {path}: {exc}") from exc
    strategies, seeds, base = parse_matrix(text)
    rows, summaries = execute_ablation(base, strategies, seeds, args.out,
                                       workers=args.workers, keep_runs=args.keep_runs)
    print(format_ablation_table(rows))
    print(f"\n{len(summaries)} runs")
    if args.out:
        print(f"artifacts written to {args.out}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.run) / "run.json"
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ReplayLabError(f"cannot read {path}: {exc}") from exc
    for key in ("final_acc", "avg_val_acc", "total_seconds", "ram_peak_bytes",
                "disk_bytes"):
        print(f"{key:>16}: {payload.get(key)}")
    return 0


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "ablation":
            return _cmd_ablation(args)
        return _cmd_inspect(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ReplayLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
