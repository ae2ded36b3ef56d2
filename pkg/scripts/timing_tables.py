"""Spoofing success tables: P_s per gNB rank (timing sweeps) and the sensitivity report.

    python scripts/timing_tables.py [--trials 10000] [--out results]
"""

import argparse
from pathlib import Path

import numpy as np

from airloc.adversary import SpoofTimingModel, penetration_grid, rows_to_csv, sensitivity_signs


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    sync = penetration_grid(rng, args.trials, delta_u_s=(1e-6, 3e-7), lead_s=(0.0, 2e-7), l_s_s=(1e-7, 2e-7))
    rows_to_csv(sync, out / "ps_by_rank.csv")
    pulses = []
    for n_pulses in (1, 3, 5):
        for row in penetration_grid(rng, args.trials, delta_sp_s=(3e-7, 1e-6), n_pulses=n_pulses):
            pulses.append({"n_pulses": n_pulses, **row})
    rows_to_csv(pulses, out / "ps_by_pulses.csv")
    rows_to_csv(sensitivity_signs(SpoofTimingModel()).rows(), out / "sensitivity.csv")
    print(f"wrote {out / 'ps_by_rank.csv'}, {out / 'ps_by_pulses.csv'}, {out / 'sensitivity.csv'}")


if __name__ == "__main__":
    main()
