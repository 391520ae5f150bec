"""Fuzzy Boolean neurons: gated conjunction, disjunction and DNF units."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import Graph, sigmoid

INIT_LOW, INIT_HIGH = -2.5, -1.5


def _check(x, m):
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if x.shape[-1:] != m.shape[-1:]:
        raise ValueError(f"length mismatch: {x.shape[-1:]} inputs vs {m.shape[-1:]} memberships")
    return x, m


def conj_forward(x, m) -> float:
    """prod_i (1 - m_i (1 - x_i)); excluded atoms (m_i = 0) contribute 1."""
    x, m = _check(x, m)
    return float(np.prod(1.0 - m * (1.0 - x)))


def disj_forward(x, m) -> float:
    """1 - prod_i (1 - x_i m_i); excluded atoms contribute 0."""
    x, m = _check(x, m)
    return float(1.0 - np.prod(1.0 - x * m))


@dataclass
class DNFUnit:
    """Trainable DNF over ``atom_count`` candidate literals with ``rule_count`` rules.

    ``forced`` marks literals whose conjunction membership is pinned to 1 in
    every rule; their raw weights are kept but ignored.
    """

    conj_w: np.ndarray
    disj_w: np.ndarray
    forced: np.ndarray = field(default=None)

    def __post_init__(self):
        self.conj_w = np.asarray(self.conj_w, dtype=np.float64)
        self.disj_w = np.asarray(self.disj_w, dtype=np.float64)
        if self.conj_w.ndim != 2 or self.disj_w.shape != (self.conj_w.shape[0],):
            raise ValueError(f"bad unit shapes {self.conj_w.shape} / {self.disj_w.shape}")
        if self.conj_w.shape[0] < 1:
            raise ValueError("a DNF unit needs at least one rule")
        if self.forced is None:
            self.forced = np.zeros(self.conj_w.shape[1], dtype=bool)
        self.forced = np.asarray(self.forced, dtype=bool)
        if self.forced.shape != (self.conj_w.shape[1],):
            raise ValueError("forced mask must have one entry per atom")

    @classmethod
    def init(cls, rule_count: int, atom_count: int, rng: np.random.Generator, forced=None) -> "DNFUnit":
        conj = rng.uniform(INIT_LOW, INIT_HIGH, size=(rule_count, atom_count))
        disj = rng.uniform(INIT_LOW, INIT_HIGH, size=rule_count)
        return cls(conj, disj, forced)

    @property
    def rule_count(self) -> int:
        return self.conj_w.shape[0]

    @property
    def atom_count(self) -> int:
        return self.conj_w.shape[1]

    @property
    def conj_m(self) -> np.ndarray:
        return np.where(self.forced[None, :], 1.0, sigmoid(self.conj_w))

    @property
    def disj_m(self) -> np.ndarray:
        return sigmoid(self.disj_w)

    @property
    def size(self) -> int:
        return self.conj_w.size + self.disj_w.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.conj_w.ravel(), self.disj_w])

    def with_flat(self, values) -> "DNFUnit":
        r, a = self.conj_w.shape
        values = np.asarray(values, dtype=np.float64)
        return DNFUnit(values[:r * a].reshape(r, a).copy(), values[r * a:].copy(), self.forced.copy())

    def copy(self) -> "DNFUnit":
        return DNFUnit(self.conj_w.copy(), self.disj_w.copy(), self.forced.copy())


def dnf_forward(x, unit: DNFUnit) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (unit.atom_count,):
        raise ValueError(f"expected {unit.atom_count} inputs, got {x.shape}")
    rules = np.prod(1.0 - unit.conj_m * (1.0 - x[None, :]), axis=1)
    return disj_forward(rules, unit.disj_m)


def interpretability_penalty(unit: DNFUnit) -> float:
    m = np.concatenate([unit.conj_m.ravel(), unit.disj_m])
    return float(np.sum(m * (1.0 - m)))


def threshold_weights(unit: DNFUnit, threshold: float = 0.5):
    """Boolean (rules x atoms) inclusion mask and per-rule activity mask."""
    return unit.conj_m >= threshold, unit.disj_m >= threshold


def crispness(unit: DNFUnit) -> float:
    """Mean distance of the memberships from the nearest of {0, 1}."""
    m = np.concatenate([unit.conj_m.ravel(), unit.disj_m])
    return float(np.mean(np.minimum(m, 1.0 - m)))


# -- graph builders ---------------------------------------------------------

@dataclass
class UnitNodes:
    """Graph handles for one DNF unit."""

    conj_w: int
    disj_w: int
    conj_m: int
    disj_m: int
    penalty: int


def build_unit(g: Graph, rule_count: int, atom_count: int, forced=None) -> UnitNodes:
    cw = g.parameter((rule_count, atom_count))
    dw = g.parameter((rule_count,))
    cm = g.sigmoid(cw)
    if forced is not None and np.any(forced):
        pin = np.asarray(forced, dtype=np.float64)[None, :]
        cm = g.add(g.mul(cm, g.constant(1.0 - pin)), g.constant(pin))
    dm = g.sigmoid(dw)
    pen = g.add(g.sum_reduce(g.mul(cm, g.one_minus(cm))), g.sum_reduce(g.mul(dm, g.one_minus(dm))))
    return UnitNodes(cw, dw, cm, dm, pen)


def build_disj(g: Graph, x: int, m: int) -> int:
    """1 - prod(1 - x m) over the last axis of ``x``."""
    return g.one_minus(g.prod_reduce(g.one_minus(g.mul(x, m)), axis=-1))
