#!/usr/bin/env python3
"""Train policy variants over several seeds and tabulate episodes to the success threshold.

    python3 scripts/run_policies.py boxworld_rrl1 boxworld_rrl2 boxworld_rrl3 --out runs/boxworld
    python3 scripts/run_policies.py gridworld gridworld_forced --out runs/gridworld
    python3 scripts/run_policies.py gridworld --branch --episodes 20000 --out runs/branch

One metrics CSV per (variant, seed) is written next to a summary.csv.
"""
import argparse
import csv
import statistics
import time
from pathlib import Path

from dnlrrl.assets import load_asset
from dnlrrl.envs.boxworld import BoxWorld
from dnlrrl.envs.gridworld import GridWorld
from dnlrrl.rrl import EPISODE_FIELDS, PolicyConfig, train_policy


def setup(name, args, seed):
    if name.startswith("boxworld"):
        env = BoxWorld(args.n, max_steps=20)
        cfg = PolicyConfig(gamma=0.7, lr=0.002, max_steps=20, episodes=args.episodes or 20_000, seed=seed)
        return load_asset(name, args.n), env, cfg
    env = GridWorld(args.chain, branch=args.branch, max_steps=50)
    cfg = PolicyConfig(gamma=0.9, lr=0.001, max_steps=50, episodes=args.episodes or 5_000, seed=seed)
    return load_asset(name), env, cfg


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("variants", nargs="+")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--chain", type=int, default=2)
    ap.add_argument("--branch", action="store_true")
    ap.add_argument("--out", default="runs/policies")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for name in args.variants:
        found = []
        for seed in args.seeds:
            p, env, cfg = setup(name, args, seed)
            t = time.perf_counter()
            res = train_policy(p, env, cfg)
            secs = time.perf_counter() - t
            with (out / f"{name}-seed{seed}.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(EPISODE_FIELDS)
                w.writerows((r.episode, r.ret, r.success, r.steps, r.loss, r.entropy) for r in res.history)
            n = res.episodes_to_threshold
            found.append(float("inf") if n is None else n)
            summary.append((name, seed, n if n is not None else "", f"{res.success_rate(cfg.window):.3f}", f"{secs:.0f}"))
            print(f"{name} seed {seed}: threshold at {n} episodes, {secs:.0f}s", flush=True)
        print(f"{name}: median {statistics.median(found)}", flush=True)
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant", "seed", "episodes_to_threshold", "trailing_success", "seconds"))
        w.writerows(summary)


if __name__ == "__main__":
    main()
