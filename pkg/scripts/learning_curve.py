#!/usr/bin/env python3
"""Print a windowed success curve from a metrics CSV written by `dnlrrl train` or run_policies.py."""
import argparse
import csv

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--window", type=int, default=500)
    ap.add_argument("--every", type=int, default=500)
    args = ap.parse_args()
    for path in args.csv:
        with open(path, newline="") as fh:
            success = np.array([float(r["success"]) for r in csv.DictReader(fh)])
        print(path)
        for end in range(args.every, len(success) + 1, args.every):
            tail = success[max(0, end - args.window):end]
            print(f"  {end:6d}  {tail.mean():.3f}  {'#' * int(round(40 * tail.mean()))}")


if __name__ == "__main__":
    main()
