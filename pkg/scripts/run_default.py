"""Run the shipped default experiment and print the summary tables.

    python scripts/run_default.py [--master-seed N] [--out trials.csv] [--workers 1]
"""

from __future__ import annotations

import argparse
import sys
import time

from stopfinder import stats
from stopfinder.cli import atomic_write
from stopfinder.simulator import load_default_config, run_experiment, trials_to_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--master-seed", type=int, default=None)
    ap.add_argument("--out", help="also write the trial table CSV here")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--resamples", type=int, default=stats.DEFAULT_RESAMPLES)
    args = ap.parse_args()

    cfg = load_default_config()
    t0 = time.perf_counter()
    table = run_experiment(cfg, args.master_seed, workers=args.workers)
    elapsed = time.perf_counter() - t0
    seed = cfg.master_seed if args.master_seed is None else args.master_seed
    print(f"{len(table)} paired trials, master seed {seed}, {elapsed:.1f}s", file=sys.stderr)
    if args.out:
        atomic_write(args.out, trials_to_csv(table))
    sys.stdout.write(stats.report(table, n_resamples=args.resamples).to_text())


if __name__ == "__main__":
    main()
