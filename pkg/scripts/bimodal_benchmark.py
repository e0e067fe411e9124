"""Mixture vs single-network regression on the bimodal synthetic benchmark.

Prints one row per seed (K=2 min-over-K distance, K=1 distance, their ratio,
the K=1 midpoint offset, assignment agreement and both baselines) and can
write the rows to CSV.

    python3 scripts/bimodal_benchmark.py --seeds 0 1 2 3 4 --csv bimodal.csv
"""

import argparse
import csv
import sys
from dataclasses import replace

from futuresight.benchmark import BenchmarkConfig, run_regression_benchmark

COLUMNS = ["seed", "n_train", "n_test", "k2_min_over_k", "k1_distance", "ratio_k2_k1", "k1_midpoint_offset",
           "k1_midpoint_offset_per_sample", "k2_agreement", "identity_distance", "linear_distance", "seconds"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--alternations", type=int, default=BenchmarkConfig.alternations)
    ap.add_argument("--iters", type=int, default=BenchmarkConfig.iters_per_alternation)
    ap.add_argument("--dropout", type=float, default=BenchmarkConfig.dropout)
    ap.add_argument("--batch-size", type=int, default=BenchmarkConfig.batch_size)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    base = BenchmarkConfig(alternations=args.alternations, iters_per_alternation=args.iters,
                           dropout=args.dropout, batch_size=args.batch_size)
    rows = []
    writer = csv.DictWriter(sys.stdout, COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for seed in args.seeds:
        row = run_regression_benchmark(replace(base, seed=seed))
        rows.append(row)
        writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            out = csv.DictWriter(fh, COLUMNS, extrasaction="ignore")
            out.writeheader()
            out.writerows(rows)


if __name__ == "__main__":
    main()
