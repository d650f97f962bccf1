#!/usr/bin/env python3
"""Fill the MNIST ablation cache used by the acceptance suite.

Runs every row the acceptance criteria need (about 4 CPU-hours cold) and
caches results under .acceptance_cache/. Safe to re-run; cached rows are
skipped. Extra non-acceptance rows (adaptive, sparse rbp) are appended
when --extras is given.
"""

import argparse
import os
import sys

# keep each worker single-threaded; parallelism comes from the process pool
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from deepchannel import ablations  # noqa: E402

CRITERIA_ROWS = [
    "bp", "rbp", "srbp", "top_layer_only",
    "rbp_nofprime", "srbp_nofprime",
    "srbp_sparse8", "srbp_sparse2", "srbp_sparse1",
    "errquant5_bp", "errquant5_rbp", "errquant5_srbp",
    "errquant3_bp", "errquant3_rbp", "errquant3_srbp",
    "errquant1_bp", "errquant1_rbp", "errquant1_srbp",
    "updquant1_rbp",
    "lcdrop10_bp", "lcdrop10_rbp", "lcdrop10_srbp",
    "lcdrop20_bp", "lcdrop20_rbp", "lcdrop20_srbp",
    "lcdrop50_bp", "lcdrop50_rbp", "lcdrop50_srbp",
    "rbp_resampled", "rbp_sign_concordant", "srbp_abs_only", "srbp_per_weight",
]

EXTRA_ROWS = [
    "arbp", "asrbp",
    "rbp_sparse8", "rbp_sparse2", "rbp_sparse1",
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--extras", action="store_true", help="also run non-acceptance rows")
    parser.add_argument("--rows", nargs="*", help="explicit row names (default: acceptance set)")
    args = parser.parse_args()

    if not ablations.mnist_available():
        sys.exit(f"MNIST IDX files not found in {ablations.mnist_dir()}; see README")

    names = args.rows or (CRITERIA_ROWS + (EXTRA_ROWS if args.extras else []))
    print(f"[ablations] ensuring {len(names)} rows with {args.jobs} jobs", flush=True)
    records = ablations.ensure_rows(names, jobs=args.jobs, verbose=True)
    print("[ablations] done")
    for name in names:
        s = records[name]["summary"]
        print(f"  {name:24s} final test {100 * s['final_test_acc_mean']:6.2f}% "
              f"(sd {100 * s['final_test_acc_std']:.2f}) "
              f"best train {100 * s['best_train_acc_mean']:6.2f}%")


if __name__ == "__main__":
    main()
