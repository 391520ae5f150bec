"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass
from pathlib import Path

from .learning import SupervisedConfig
from .rrl import PolicyConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "supervised"
    program: str = ""
    env: str = "none"
    n: int = 4
    goal: str = "stack"
    chain: int = 2
    branch: bool = False
    max_steps: int = 20
    out_dir: str = "runs/out"
    checkpoint_interval: int = 0
    workers: int = 1
    # optimisation, shared by both modes
    lr: float = 0.05
    t_max: int | None = None
    lam: float = 0.0
    ramp_start: float = 0.75
    constraint_weight: float = 1.0
    seed: int = 0
    # supervised
    epochs: int = 2000
    # policy gradient
    gamma: float = 0.7
    c: float = 10.0
    episodes: int = 20000
    baseline: bool = True
    baseline_decay: float = 0.99
    target: str = "move"
    window: int = 500
    success_threshold: float = 0.9
    stop_at_threshold: bool = True

    def __post_init__(self):
        if self.mode not in ("supervised", "rrl"):
            raise ConfigError(f"mode must be 'supervised' or 'rrl', got {self.mode!r}")
        if self.env not in ("none", "boxworld", "gridworld"):
            raise ConfigError(f"unknown env {self.env!r}")
        if self.mode == "rrl" and self.env == "none":
            raise ConfigError("rrl mode needs env = boxworld or gridworld")
        if self.workers != 1:
            raise ConfigError("only workers = 1 is supported")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval must be >= 0")
        try:
            self.supervised()
            if self.mode == "rrl":
                self.policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def supervised(self) -> SupervisedConfig:
        return SupervisedConfig(epochs=self.epochs, lr=self.lr, t_max=self.t_max, lam=self.lam,
                                ramp_start=self.ramp_start, constraint_weight=self.constraint_weight,
                                seed=self.seed)

    def policy(self) -> PolicyConfig:
        return PolicyConfig(gamma=self.gamma, lr=self.lr, c=self.c, t_max=self.t_max,
                            max_steps=self.max_steps, episodes=self.episodes, lam=self.lam,
                            ramp_start=self.ramp_start, baseline=self.baseline,
                            baseline_decay=self.baseline_decay, constraint_weight=self.constraint_weight,
                            target=self.target, window=self.window,
                            success_threshold=self.success_threshold,
                            stop_at_threshold=self.stop_at_threshold, seed=self.seed)

    def make_env(self):
        from .envs import make_env
        if self.env == "boxworld":
            return make_env("boxworld", n=self.n, max_steps=self.max_steps, goal=self.goal)
        if self.env == "gridworld":
            return make_env("gridworld", chain=self.chain, branch=self.branch, max_steps=self.max_steps)
        return None

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in dataclasses.asdict(self).items())

    def items(self):
        return [(k, _format(v)) for k, v in dataclasses.asdict(self).items()]


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_HINTS = typing.get_type_hints(RunConfig)


def _coerce(key: str, raw: str):
    hint = _HINTS[key]
    optional = typing.get_origin(hint) in (typing.Union, types.UnionType) and type(None) in typing.get_args(hint)
    if optional:
        if raw.lower() == "none":
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    if hint is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    try:
        return hint(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {hint.__name__}") from None


def parse_config(text: str, base_dir: Path | None = None, overrides: dict | None = None,
                 environ=os.environ) -> RunConfig:
    """Read ``key = value`` lines; ``#`` starts a comment.

    Relative program paths resolve against ``base_dir``; ``asset:<name>``
    names a bundled program. ``DNL_SEED`` in ``environ`` overrides the seed,
    and ``overrides`` (from command-line flags) override everything.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    if environ.get("DNL_SEED"):
        values["seed"] = _coerce("seed", environ["DNL_SEED"])
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    if "lr" not in values and values.get("mode") == "rrl":
        values["lr"] = 0.002
    prog = values.get("program", "")
    if not prog:
        raise ConfigError("config must set program")
    if not prog.startswith("asset:"):
        path = Path(prog)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"program file {path} does not exist")
        values["program"] = str(path.resolve())
    return RunConfig(**values)


def load_config(path, overrides=None, environ=os.environ) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent, overrides, environ)


def load_program(cfg: RunConfig):
    from .assets import load_asset
    from .program import parse_program, ProgramError, validate_program
    if cfg.program.startswith("asset:"):
        name = cfg.program[len("asset:"):]
        n = cfg.n if cfg.env == "boxworld" and name.startswith("boxworld") else None
        return load_asset(name, n)
    p = parse_program(Path(cfg.program).read_text())
    problems = validate_program(p)
    if problems:
        raise ProgramError(problems[0].code, problems[0].message)
    return p
