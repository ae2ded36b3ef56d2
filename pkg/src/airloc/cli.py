"""Command line entry point: ``airloc run --config <file> ...``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .harness.campaign import export, export_summary, run_campaign, worker_count
from .harness.config import SCENARIOS, ConfigError, load_config

FULL_SEEDS = 1000


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airloc", description="UAV TDOA localization and spoofing campaigns")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a seeded campaign and write per-seed records and a summary")
    run.add_argument("--config", required=True, help="YAML campaign file")
    run.add_argument("--scenario", choices=SCENARIOS, help="override the scenario named in the file")
    run.add_argument("--seeds", type=_positive, help="number of seeds (default from config)")
    run.add_argument("--full", action="store_true", help=f"run {FULL_SEEDS} seeds")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--seed-base", type=int, help="first seed (default from config)")
    return parser


def _run(args) -> int:
    cfg = load_config(args.config, args.scenario)
    if args.full:
        cfg.seeds = FULL_SEEDS
    elif args.seeds is not None:
        cfg.seeds = args.seeds
    if args.seed_base is not None:
        cfg.base_seed = args.seed_base
    cfg.validate()
    workers = worker_count()
    t0 = time.perf_counter()
    result = run_campaign(cfg, workers)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    rec = export(result, out / f"{cfg.scenario}_records.{args.format}", args.format)
    summ = export_summary(result, out / f"{cfg.scenario}_summary.{args.format}", args.format)
    print(f"{cfg.scenario}: {cfg.seeds} seeds, {len(result.records)} records in {elapsed:.1f} s "
          f"({workers} workers)")
    print(f"wrote {rec}")
    print(f"wrote {summ}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"airloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
