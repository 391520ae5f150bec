#!/usr/bin/env python3
"""Learn the reachability predicate on the sample graph and print the extracted rules."""
import argparse
import itertools

import numpy as np

from dnlrrl.assets import load_asset
from dnlrrl.extraction import extract_program_rules, random_instance, verify_crisp_equivalence
from dnlrrl.learning import SupervisedConfig, train_supervised


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--lam", type=float, default=0.01)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--trials", type=int, default=20)
    args = ap.parse_args()

    p = load_asset("graph_cnt")
    for seed in args.seeds:
        res = train_supervised(p, SupervisedConfig(epochs=args.epochs, lam=args.lam, seed=seed))
        rules = extract_program_rules(p, res.units, 0.5)["cnt"]
        rng = np.random.default_rng(seed)
        rep = verify_crisp_equivalence({"cnt": rules}, p, res.units,
                                       instances=[random_instance(p, rng) for _ in range(args.trials)])
        print(f"seed {seed}: accuracy {res.accuracy:.3f}, first perfect epoch {res.first_perfect_epoch}, "
              f"crispness {rules.crispness:.4f}")
        for c in rules.clauses:
            print(f"    {c}")
        print(f"    verification: {rep}")


if __name__ == "__main__":
    main()
