#!/usr/bin/env python3
"""Error of replacing a mixture-arrival, mixture-patience queue by an M/M/1+M model.

The general queue has Exp(10)/Exp(40) mixture arrivals with weight p on the
slow phase; the simplified model keeps the arrival intensity and the mean
patience but makes both exponential.  Gaps are relative to the general model.
"""
import argparse
import os

from abandonq.config import write_rows
from abandonq.studies import run_markovian_simplification_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    ap.add_argument("--r", type=int, default=10)
    ap.add_argument("--out", default="results/markovian")
    args = ap.parse_args()

    rows = run_markovian_simplification_study(tuple(args.p), r=args.r)
    os.makedirs(args.out, exist_ok=True)
    write_rows(os.path.join(args.out, "markovian.csv"), rows)
    for row in rows:
        print(f"p={row['p']:.1f} {row['measure']:>20} general {row['gi']:.5f} "
              f"markovian {row['simplified']:.5f} gap {row['rel_gap']:.1%}")


if __name__ == "__main__":
    main()
