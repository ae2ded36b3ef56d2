"""Run every shipped campaign config and write records and summaries.

    python scripts/run_campaigns.py [--seeds N] [--out results] [--only attack_defense ...]
"""

import argparse
import time
from pathlib import Path

from airloc.harness import export, export_summary, load_config, run_campaign, worker_count

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, help="override the seed count of every config")
    parser.add_argument("--out", default="results")
    parser.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = parser.parse_args()
    out = Path(args.out)
    for path in sorted(CONFIGS.glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        cfg = load_config(path)
        if args.seeds:
            cfg.seeds = args.seeds
        t0 = time.perf_counter()
        res = run_campaign(cfg, worker_count())
        export(res, out / f"{cfg.scenario}_records.csv")
        export_summary(res, out / f"{cfg.scenario}_summary.csv")
        print(f"{cfg.scenario:15s} {cfg.seeds:5d} seeds {len(res.records):7d} records "
              f"{time.perf_counter() - t0:7.1f} s")


if __name__ == "__main__":
    main()
