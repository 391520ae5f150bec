"""Policy-gradient training with a target predicate as the policy.

The policy over actions is ``softmax(c * v)`` where ``v`` are the target's
valuations after chaining the current state groundings. Action ``k`` is the
``k``-th head grounding in row-major constant order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .deduction import Deducer, IndexPlan, ValuationStore, compile_index_plan, initial_store
from .learning import Adam, expand_literal, lambda_schedule
from .logic import DNFUnit
from .program import Program


class SchemaMismatch(ValueError):
    """Environment groundings do not fit the program's state predicates."""


@dataclass
class PolicyConfig:
    gamma: float = 0.7
    lr: float = 0.002
    c: float = 10.0
    t_max: int | None = None
    max_steps: int = 20
    episodes: int = 20000
    lam: float = 0.0
    ramp_start: float = 0.75
    baseline: bool = True
    baseline_decay: float = 0.99
    constraint_weight: float = 1.0
    target: str = "move"
    window: int = 500
    success_threshold: float = 0.9
    stop_at_threshold: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.max_steps < 1 or self.episodes < 1:
            raise ValueError("max_steps and episodes must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0 <= self.baseline_decay < 1:
            raise ValueError("baseline_decay must be in [0, 1)")
        if self.window < 1 or not 0 <= self.success_threshold <= 1:
            raise ValueError("window must be >= 1 and success_threshold in [0, 1]")


@dataclass
class Step:
    groundings: dict[str, np.ndarray]
    action: int
    log_prob: float
    reward: float


@dataclass
class Trajectory:
    steps: list[Step] = field(default_factory=list)
    terminal: bool = False

    @property
    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]

    def __len__(self):
        return len(self.steps)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def action_distribution(store: ValuationStore, target: str, c: float) -> np.ndarray:
    """Softmax of ``c`` times the target's valuations in a chained store."""
    if target not in store.layout.offsets:
        raise KeyError(f"unknown target {target!r}")
    return softmax(c * store.of(target).ravel())


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def check_schema(p: Program, env, target: str = "move"):
    """Raise SchemaMismatch unless ``env`` can drive ``p``."""
    if target not in p.targets:
        raise SchemaMismatch(f"program has no target {target!r}")
    for pred, types in env.schema.items():
        sig = p.preds.get(pred)
        if sig is None:
            raise SchemaMismatch(f"environment emits {pred!r}, which the program does not declare")
        if sig.kind != "state":
            raise SchemaMismatch(f"{pred!r} must be declared as a state predicate, not {sig.kind}")
        if len(sig.types) != len(types):
            raise SchemaMismatch(f"{pred!r} has arity {len(sig.types)}, environment emits {len(types)}")
        for ours, theirs in zip(sig.types, types):
            if p.types.get(ours) != env.types[theirs]:
                raise SchemaMismatch(f"{pred!r}: type {ours!r} constants differ from the environment's {theirs!r}")
    for name, sig in p.preds.items():
        if sig.kind == "state" and name not in env.schema:
            raise SchemaMismatch(f"state predicate {name!r} is not emitted by the environment")
    heads = math.prod(len(p.types[t]) for _, t in p.targets[target].head_vars)
    if heads != env.action_count:
        raise SchemaMismatch(f"target {target!r} has {heads} groundings, environment has {env.action_count} actions")


class PolicyGraph:
    """Chaining engine plus the per-step ``-log pi(a)`` node."""

    def __init__(self, plan: IndexPlan, target: str, c: float, t_max: int | None = None,
                 constraint_weight: float = 1.0):
        self.plan = plan
        self.engine = Deducer(plan, t_max)
        self.target = target
        self.c = c
        g = self.engine.graph
        self.action_in = g.input((), "action", dtype=np.int64)
        self.logits = g.scale(self.engine.out[target], c)
        self.nll = g.softmax_xent(self.logits, self.action_in)
        self.constraint = self._constraint_node(constraint_weight)

    def _constraint_node(self, weight):
        g = self.engine.graph
        p, lay = self.plan.program, self.plan.layout
        terms = []
        for con in p.constraints:
            idx = np.array([lay.index(a) for a in expand_literal(p, con.literal.atom)], dtype=np.intp)
            want = con.value if not con.literal.negated else 1 - con.value
            v = g.gather(self.engine.store_out, idx)
            if want == 0:
                v = g.one_minus(v)
            terms.append(g.scale(g.sum_reduce(g.log(v, 1e-7)), -weight))
        if not terms:
            return None
        node = terms[0]
        for t in terms[1:]:
            node = g.add(node, t)
        return node

    def run(self, params, groundings: dict[str, np.ndarray], action: int = 0):
        store = initial_store(self.plan, groundings)
        return self.engine.run(params, store, {self.action_in: np.int64(action)})

    def probs(self, ev) -> np.ndarray:
        return softmax(np.asarray(ev.values[self.logits]))

    def nll_grad(self, ev) -> np.ndarray:
        return self.engine.graph.gradient(ev, self.nll)

    def penalty_grad(self, ev) -> np.ndarray:
        return self.engine.graph.gradient(ev, self.engine.penalty)

    def constraint_value(self, ev) -> float:
        return float(ev.values[self.constraint]) if self.constraint is not None else 0.0


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    success: int
    steps: int
    loss: float
    entropy: float


EPISODE_FIELDS = ("episode", "return", "success", "steps", "loss", "entropy")


@dataclass
class PolicyResult:
    units: dict[str, DNFUnit]
    history: list[EpisodeRecord] = field(default_factory=list)
    episodes_to_threshold: int | None = None

    def success_rate(self, window: int = 500) -> float:
        tail = self.history[-window:]
        return float(np.mean([r.success for r in tail])) if tail else 0.0


def rollout(pg: PolicyGraph, params, env, rng: np.random.Generator, max_steps: int,
            on_step=None, keep: bool = True):
    """Sample one episode; returns (trajectory, evaluations, entropies)."""
    state = env.reset(rng)
    traj = Trajectory()
    evs, ents = [], []
    for _ in range(max_steps):
        gr = env.groundings(state)
        ev = pg.run(params, gr)
        probs = pg.probs(ev)
        action = int(rng.choice(probs.size, p=probs))
        if on_step is not None:
            on_step(state, ev, probs, action)
        ents.append(float(-np.sum(probs * np.log(np.maximum(probs, 1e-300)))))
        state, reward, done = env.step(state, action)
        traj.steps.append(Step(gr if keep else {}, action, float(np.log(max(probs[action], 1e-300))), reward))
        if keep:
            ev.values[pg.action_in] = np.int64(action)
            evs.append(ev)
        if done:
            traj.terminal = True
            break
    return traj, evs, ents


def episode_gradient(pg: PolicyGraph, evs, advantages) -> np.ndarray:
    """``sum_t advantage_t * grad(-log pi(a_t))`` over recorded evaluations."""
    grad = np.zeros(pg.engine.graph.n_params)
    for ev, adv in zip(evs, advantages):
        if adv != 0.0:
            grad += adv * pg.nll_grad(ev)
    return grad


def train_policy(p: Program, env, cfg: PolicyConfig, plan: IndexPlan | None = None,
                 callback=None, units: dict[str, DNFUnit] | None = None) -> PolicyResult:
    """Vanilla policy gradient with one update per episode.

    ``callback(record, units)`` runs after every episode; returning True stops
    training early.
    """
    check_schema(p, env, cfg.target)
    plan = plan or compile_index_plan(p)
    pg = PolicyGraph(plan, cfg.target, cfg.c, cfg.t_max, cfg.constraint_weight)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng, rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
    units = units or pg.engine.init_units(init_rng)
    params = pg.engine.flatten(units)
    opt = Adam(params.size, cfg.lr)
    result = PolicyResult(units)
    baseline = 0.0
    successes = []
    for episode in range(cfg.episodes):
        traj, evs, ents = rollout(pg, params, env, rng, cfg.max_steps)
        returns = discounted_returns(traj.rewards, cfg.gamma)
        b = baseline if cfg.baseline else 0.0
        adv = returns - b
        grad = episode_gradient(pg, evs, adv)
        lam = lambda_schedule(episode, cfg.episodes, cfg.lam, cfg.ramp_start)
        pen = float(evs[0].values[pg.engine.penalty])
        loss = float(np.sum(adv * -np.array([s.log_prob for s in traj.steps]))) + lam * pen
        if lam > 0:
            grad += lam * pg.penalty_grad(evs[0])
        if pg.constraint is not None and cfg.constraint_weight > 0:
            loss += pg.constraint_value(evs[0])
            grad += pg.engine.graph.gradient(evs[0], pg.constraint)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite policy gradient at episode {episode}")
        params = opt.step(params, grad)
        if cfg.baseline:
            baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * float(np.mean(returns))
        success = int(any(r > 0 for r in traj.rewards))
        rec = EpisodeRecord(episode, float(returns[0]) if len(returns) else 0.0, success, len(traj),
                            loss, float(np.mean(ents)))
        result.history.append(rec)
        successes.append(success)
        if len(successes) >= cfg.window and result.episodes_to_threshold is None:
            if np.mean(successes[-cfg.window:]) >= cfg.success_threshold:
                result.episodes_to_threshold = episode + 1
        stop = callback(rec, pg.engine.unflatten(params)) if callback else False
        if stop or (cfg.stop_at_threshold and result.episodes_to_threshold is not None):
            break
    result.units = pg.engine.unflatten(params)
    return result


@dataclass
class EvalReport:
    episodes: int
    mean_return: float
    success_rate: float
    mean_steps: float


def evaluate_policy(p: Program, env, units: dict[str, DNFUnit], episodes: int, cfg: PolicyConfig,
                    plan: IndexPlan | None = None, on_step=None, seed: int | None = None) -> EvalReport:
    """Sample ``episodes`` episodes from the fixed policy."""
    check_schema(p, env, cfg.target)
    plan = plan or compile_index_plan(p)
    pg = PolicyGraph(plan, cfg.target, cfg.c, cfg.t_max, 0.0)
    params = pg.engine.flatten(units)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    rets, succ, lens = [], [], []
    for _ in range(episodes):
        traj, _, _ = rollout(pg, params, env, rng, cfg.max_steps, on_step=on_step, keep=False)
        rets.append(discounted_returns(traj.rewards, cfg.gamma)[0] if len(traj) else 0.0)
        succ.append(any(r > 0 for r in traj.rewards))
        lens.append(len(traj))
    return EvalReport(episodes, float(np.mean(rets)), float(np.mean(succ)), float(np.mean(lens)))
