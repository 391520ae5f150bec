"""Supervised ILP training: cross-entropy on examples plus penalties."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .deduction import Deducer, IndexPlan, ValuationStore, compile_index_plan, initial_store
from .logic import DNFUnit
from .program import Atom, Program, is_variable

EPS = 1e-7


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became NaN at epoch {epoch}")
        self.epoch = epoch


class Adam:
    """Adaptive-moment gradient descent on a flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class SupervisedConfig:
    epochs: int = 2000
    lr: float = 0.05
    t_max: int | None = 4
    lam: float = 0.0
    ramp_start: float = 0.75
    constraint_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lam < 0 or self.constraint_weight < 0:
            raise ValueError("penalty weights must be non-negative")


def lambda_schedule(epoch: int, epochs: int, lam: float, ramp_start: float = 0.75) -> float:
    """0 until ``ramp_start`` of training, then linear up to ``lam`` at the last epoch."""
    start = int(math.floor(ramp_start * epochs))
    if epoch < start or lam == 0:
        return 0.0
    span = max(epochs - 1 - start, 1)
    return lam * min(1.0, (epoch - start + 1) / span)


def expand_literal(p: Program, atom: Atom) -> list[Atom]:
    """All groundings of an atom whose arguments may be variables."""
    sig = p.preds[atom.pred]
    choices = []
    for a, t in zip(atom.args, sig.types):
        choices.append(p.types[t] if is_variable(a) else (a,))
    out = []
    for combo in itertools.product(*choices):
        binding, ok = {}, True
        for a, c in zip(atom.args, combo):
            if is_variable(a) and binding.setdefault(a, c) != c:
                ok = False
        if ok:
            out.append(Atom(atom.pred, tuple(combo)))
    return out


class SupervisedLoss:
    """Loss graph on top of a Deducer; λ is fed per evaluation."""

    def __init__(self, engine: Deducer, constraint_weight: float = 1.0):
        self.engine = engine
        g = engine.graph
        p = engine.plan.program
        lay = engine.plan.layout
        self.lam_in = g.input((), "lambda")
        try:
            pos = np.array([lay.index(a) for a in p.pos], dtype=np.intp)
            neg = np.array([lay.index(a) for a in p.neg], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"example is not a grounding of a declared predicate: {exc}") from None
        self.pos_idx, self.neg_idx = pos, neg
        terms = []
        if pos.size:
            v = g.gather(engine.store_out, pos)
            terms.append(g.scale(g.sum_reduce(g.log(v, EPS)), -1.0))
        if neg.size:
            v = g.gather(engine.store_out, neg)
            terms.append(g.scale(g.sum_reduce(g.log(g.one_minus(v), EPS)), -1.0))
        ones, zeros = [], []
        for c in p.constraints:
            idx = [lay.index(a) for a in expand_literal(p, c.literal.atom)]
            want = c.value if not c.literal.negated else 1 - c.value
            (ones if want == 1 else zeros).extend(idx)
        if constraint_weight and (ones or zeros):
            cterms = []
            if ones:
                v = g.gather(engine.store_out, np.array(ones, dtype=np.intp))
                cterms.append(g.scale(g.sum_reduce(g.log(v, EPS)), -constraint_weight))
            if zeros:
                v = g.gather(engine.store_out, np.array(zeros, dtype=np.intp))
                cterms.append(g.scale(g.sum_reduce(g.log(g.one_minus(v), EPS)), -constraint_weight))
            terms += cterms
        terms.append(g.mul(self.lam_in, engine.penalty))
        loss = terms[0]
        for t in terms[1:]:
            loss = g.add(loss, t)
        self.loss = loss

    def evaluate(self, params, store: ValuationStore, lam: float):
        return self.engine.run(params, store, {self.lam_in: np.float64(lam)})

    def accuracy(self, ev) -> float:
        vals = np.asarray(ev.values[self.engine.store_out])
        right = np.sum(vals[self.pos_idx] >= 0.5) + np.sum(vals[self.neg_idx] < 0.5)
        total = self.pos_idx.size + self.neg_idx.size
        return float(right / total) if total else 1.0


def supervised_loss(store: ValuationStore, p: Program, units: dict[str, DNFUnit], lam: float,
                    plan: IndexPlan | None = None, t_max: int | None = None) -> float:
    """Loss of ``units`` on ``p``'s examples after chaining from ``store``."""
    plan = plan or compile_index_plan(p)
    lossg = SupervisedLoss(Deducer(plan, t_max))
    ev = lossg.evaluate(units, store, lam)
    return float(ev.values[lossg.loss])


def mean_distance_from_crisp(flat_m: np.ndarray) -> float:
    return float(np.mean(np.abs(flat_m - np.round(flat_m)))) if flat_m.size else 0.0


def memberships(units: dict[str, DNFUnit]) -> np.ndarray:
    parts = [np.concatenate([u.conj_m.ravel(), u.disj_m]) for u in units.values()]
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class SupervisedResult:
    units: dict[str, DNFUnit]
    history: list[dict] = field(default_factory=list)
    accuracy: float = 0.0
    first_perfect_epoch: int | None = None


HISTORY_FIELDS = ("epoch", "loss", "accuracy", "crisp_distance")


def train_supervised(p: Program, cfg: SupervisedConfig, plan: IndexPlan | None = None,
                     callback=None) -> SupervisedResult:
    if not (p.pos or p.neg):
        raise ValueError("program has no examples")
    plan = plan or compile_index_plan(p)
    engine = Deducer(plan, cfg.t_max)
    lossg = SupervisedLoss(engine, cfg.constraint_weight)
    rng = np.random.default_rng(cfg.seed)
    units = engine.init_units(rng)
    params = engine.flatten(units)
    opt = Adam(params.size, cfg.lr)
    store = initial_store(plan)
    result = SupervisedResult(units)
    for epoch in range(cfg.epochs):
        lam = lambda_schedule(epoch, cfg.epochs, cfg.lam, cfg.ramp_start)
        ev = lossg.evaluate(params, store, lam)
        loss = float(ev.values[lossg.loss])
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
        acc = lossg.accuracy(ev)
        if acc == 1.0 and result.first_perfect_epoch is None:
            result.first_perfect_epoch = epoch
        units = engine.unflatten(params)
        row = {"epoch": epoch, "loss": loss, "accuracy": acc,
               "crisp_distance": mean_distance_from_crisp(memberships(units))}
        result.history.append(row)
        if callback:
            callback(row, units)
        params = opt.step(params, engine.graph.gradient(ev, lossg.loss))
    ev = lossg.evaluate(params, store, 0.0)
    result.units = engine.unflatten(params)
    result.accuracy = lossg.accuracy(ev)
    return result
