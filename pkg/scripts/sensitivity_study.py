"""Test error against ensemble size for both model families on synthetic data.

Writes a CSV (family, n_trees, test_mae, test_mse) to stdout or --out.

    python3 scripts/sensitivity_study.py --trees 300 --out sensitivity.csv
"""
import argparse
import csv
import sys

from crashml.data_model import aggregate_sections, make_dataset, train_test_split
from crashml.ensemble import sensitivity_curve
from crashml.synthetic import generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sections", type=int, default=1818)
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--learning-rate", type=float, default=1.0)
    ap.add_argument("--out")
    args = ap.parse_args()

    data = make_dataset(aggregate_sections(generate_synthetic(args.sections, seed=args.seed)))
    train, test = train_test_split(data, 0.8, args.seed)
    counts = sorted({1, 2, 5} | set(range(10, args.trees + 1, 10)) | {args.trees})
    counts = [k for k in counts if k <= args.trees]
    curves = [sensitivity_curve(train, test, "boost", counts, args.seed,
                                learning_rate=args.learning_rate),
              sensitivity_curve(train, test, "forest", counts, args.seed)]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["family", "n_trees", "test_mae", "test_mse"])
    for c in curves:
        for k, a, s in c.points:
            w.writerow([c.family, k, f"{a:.6g}", f"{s:.6g}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
