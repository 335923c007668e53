"""MNIST/USPS binary adaptation benchmark on a digit-pair subset or all 45 pairs.

    python scripts/reproduce_mnist_usps.py --mnist-dir data/mnist \
        --usps-train data/usps_train.csv --usps-test data/usps_test.csv --pairs subset

USPS CSVs can be produced with scripts/convert_usps.py.
"""

import argparse
import logging

from labelalign import harness
from labelalign.datasets import load_mnist_corpus, load_usps_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mnist-dir", required=True)
    ap.add_argument("--usps-train", required=True)
    ap.add_argument("--usps-test", required=True)
    ap.add_argument("--pairs", choices=("subset", "all"), default="subset")
    ap.add_argument("--columns", default=",".join(harness.MNIST_USPS_COLUMNS))
    ap.add_argument("--solver", choices=harness.SOLVERS, default="gd")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/mnist_usps")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    pairs = harness.ALL_PAIRS if args.pairs == "all" else harness.SUBSET_PAIRS
    report = harness.run_mnist_usps(
        load_mnist_corpus(args.mnist_dir),
        load_usps_corpus(args.usps_train, args.usps_test),
        pairs=pairs,
        columns=args.columns.split(","),
        solver=args.solver,
        seed=args.seed,
        progress=logging.info,
    )
    report.write(args.out, timestamp=False)
    print(f"{'column':8s} {'baseline':>9s} {'regularizer':>12s} {'ref base':>9s} {'ref reg':>8s}")
    for row in report.tables["columns"]:
        print(
            f"{row['column']:8s} {row['baseline_mean_pct']:9.2f} {row['regularizer_mean_pct']:12.2f} "
            f"{row['reference_baseline_pct']:9.2f} {row['reference_regularizer_pct']:8.2f}"
        )


if __name__ == "__main__":
    main()
