"""Command-line entry point: ``dnlrrl train|eval|extract|check``."""
from __future__ import annotations

import argparse
import csv
import itertools
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, loads, write_checkpoint
from .config import ConfigError, RunConfig, load_config, load_program, parse_config
from .deduction import Deducer, compile_index_plan, initial_store
from .extraction import extract_program_rules, verify_crisp_equivalence
from .learning import HISTORY_FIELDS, SupervisedLoss, TrainingDiverged, train_supervised
from .program import Atom, ProgramError, parse_program, validate_program
from .rrl import EPISODE_FIELDS, SchemaMismatch, check_schema, evaluate_policy, train_policy

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONFIG = 4
EXIT_PROGRAM = 5
EXIT_SCHEMA = 6
EXIT_CHECKPOINT = 7
EXIT_DIVERGED = 8


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnlrrl", description="Differentiable ILP and relational RL.")
    sub = ap.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train", help="train from a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--episodes", type=int)
    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int)
    x = sub.add_parser("extract", help="print crisp clauses from a checkpoint")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--threshold", type=float, default=0.5)
    x.add_argument("--trials", type=int, default=20)
    c = sub.add_parser("check", help="parse and validate a program")
    c.add_argument("--program", required=True)
    return ap


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _program(cfg: RunConfig):
    try:
        return load_program(cfg)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read program: {exc}") from None
    except (ProgramError, KeyError, ValueError) as exc:
        raise _Fail(EXIT_PROGRAM, f"program error: {exc}") from None


def _write_csv(path: Path, fields, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def cmd_train(args) -> int:
    _read(args.config)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "episodes": args.episodes})
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"config error: {exc}") from None
    p = _program(cfg)
    plan = compile_index_plan(p)
    out = Path(cfg.out_dir)
    if not out.is_absolute():
        out = Path(args.config).parent / out
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(cfg.items())

    def save(units, name):
        write_checkpoint(units, out / name, plan.candidates, meta)

    if cfg.mode == "supervised":
        def cb(row, units):
            e = row["epoch"] + 1
            if cfg.checkpoint_interval and e % cfg.checkpoint_interval == 0:
                save(units, f"checkpoint-{e:06d}.ckpt")
        try:
            res = train_supervised(p, cfg.supervised(), plan, callback=cb)
        except TrainingDiverged as exc:
            raise _Fail(EXIT_DIVERGED, str(exc)) from None
        except ValueError as exc:
            raise _Fail(EXIT_PROGRAM, str(exc)) from None
        _write_csv(out / "metrics.csv", HISTORY_FIELDS, ([r[k] for k in HISTORY_FIELDS] for r in res.history))
        save(res.units, "checkpoint.ckpt")
        print(f"epochs={len(res.history)} final_accuracy={res.accuracy:.4f} "
              f"first_perfect_epoch={res.first_perfect_epoch}")
        return EXIT_OK

    env = cfg.make_env()
    try:
        check_schema(p, env, cfg.target)
    except SchemaMismatch as exc:
        raise _Fail(EXIT_SCHEMA, f"schema mismatch: {exc}") from None

    def cb(rec, units):
        e = rec.episode + 1
        if cfg.checkpoint_interval and e % cfg.checkpoint_interval == 0:
            save(units, f"checkpoint-{e:06d}.ckpt")
        return False

    try:
        res = train_policy(p, env, cfg.policy(), plan, callback=cb)
    except FloatingPointError as exc:
        raise _Fail(EXIT_DIVERGED, str(exc)) from None
    _write_csv(out / "metrics.csv", EPISODE_FIELDS,
               ((r.episode, r.ret, r.success, r.steps, r.loss, r.entropy) for r in res.history))
    save(res.units, "checkpoint.ckpt")
    print(f"episodes={len(res.history)} trailing_success={res.success_rate(cfg.window):.4f} "
          f"episodes_to_threshold={res.episodes_to_threshold}")
    return EXIT_OK


def _load_checkpoint(path):
    text = _read(path)
    try:
        _, meta = loads(text)
        cfg = parse_config("".join(f"{k} = {v}\n" for k, v in meta.items()), Path(path).parent, environ={})
    except CheckpointError as exc:
        raise _Fail(EXIT_CHECKPOINT, f"checkpoint error: {exc}") from None
    except ConfigError as exc:
        raise _Fail(EXIT_CHECKPOINT, f"checkpoint metadata: {exc}") from None
    p = _program(cfg)
    plan = compile_index_plan(p)
    forced = {n: plan.forced_mask(n) for n in p.targets}
    try:
        units, _ = loads(text, plan.candidates, forced)
    except CheckpointError as exc:
        raise _Fail(EXIT_CHECKPOINT, f"checkpoint error: {exc}") from None
    return cfg, p, plan, units


def cmd_eval(args) -> int:
    cfg, p, plan, units = _load_checkpoint(args.checkpoint)
    if cfg.mode == "supervised":
        lossg = SupervisedLoss(Deducer(plan, cfg.t_max))
        ev = lossg.evaluate(units, initial_store(plan), 0.0)
        print(f"accuracy={lossg.accuracy(ev):.4f} loss={float(ev.values[lossg.loss]):.6f}")
        return EXIT_OK
    env = cfg.make_env()
    try:
        rep = evaluate_policy(p, env, units, args.episodes, cfg.policy(), plan,
                              seed=args.seed if args.seed is not None else cfg.seed)
    except SchemaMismatch as exc:
        raise _Fail(EXIT_SCHEMA, f"schema mismatch: {exc}") from None
    print(f"episodes={rep.episodes} mean_return={rep.mean_return:.4f} "
          f"success_rate={rep.success_rate:.4f} mean_steps={rep.mean_steps:.2f}")
    return EXIT_OK


def _env_instances(cfg: RunConfig, p, count: int, seed: int):
    """Programs whose state facts come from randomly driven environment episodes."""
    env = cfg.make_env()
    rng = np.random.default_rng(seed)
    out = []
    state = env.reset(rng)
    for _ in range(count):
        for _ in range(int(rng.integers(0, 6))):
            state, _, done = env.step(state, int(rng.integers(env.action_count)))
            if done:
                state = env.reset(rng)
        facts = list(p.facts)
        for pred, arr in env.groundings(state).items():
            sig = p.preds[pred]
            for idx, combo in zip(np.ndindex(arr.shape),
                                  itertools.product(*(p.types[t] for t in sig.types))):
                if arr[idx] >= 0.5:
                    facts.append((Atom(pred, combo), 1.0))
        out.append(replace(p, facts=facts, pos=[], neg=[]))
    return out


def cmd_extract(args) -> int:
    cfg, p, plan, units = _load_checkpoint(args.checkpoint)
    rules = extract_program_rules(p, units, args.threshold, plan)
    for name, r in rules.items():
        print(f"# target {name}: {len(r.clauses)} clause(s), crispness distance {r.crispness:.4f}")
        sys.stdout.write(r.to_dsl())
    clauses = {n: r.clauses for n, r in rules.items()}
    if cfg.mode == "rrl":
        instances = _env_instances(cfg, p, args.trials, cfg.seed)
        rep = verify_crisp_equivalence(clauses, p, units, threshold=args.threshold,
                                       instances=instances, t_max=cfg.t_max)
    else:
        rep = verify_crisp_equivalence(clauses, p, units, trials=args.trials, seed=cfg.seed,
                                       threshold=args.threshold)
    print(f"# verification: {rep}".replace("\n", "\n# "))
    return EXIT_OK


def cmd_check(args) -> int:
    text = _read(args.program)
    try:
        p = parse_program(text)
    except ProgramError as exc:
        raise _Fail(EXIT_PROGRAM, f"{args.program}: {exc}") from None
    problems = validate_program(p)
    if problems:
        for d in problems:
            print(f"{args.program}: {d}", file=sys.stderr)
        return EXIT_PROGRAM
    print(f"{args.program}: ok ({len(p.preds)} predicates, {len(p.targets)} targets)")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "extract": cmd_extract, "check": cmd_check}


def run_command(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except _Fail as exc:
        print(f"dnlrrl {args.command}: {exc}", file=sys.stderr)
        return exc.code


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
