"""Fuzzy forward chaining over a dense valuation store.

Every grounding of every predicate has one slot in a flat store, laid out
predicate by predicate (declaration order), each predicate row-major over its
argument positions in the declared constant order of each type. Negated
literals gather from a mirrored copy ``1 - store`` appended after the store.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .logic import DNFUnit, UnitNodes, build_disj, build_unit
from .program import (Atom, CandidateAtomSet, Literal, Program, dependency_graph,
                      enumerate_candidate_atoms, is_variable)
from .tape import Evaluation, Graph


class Layout:
    """Mixed-radix grounding index for every predicate of a program."""

    def __init__(self, p: Program):
        self.types = {k: tuple(v) for k, v in p.types.items()}
        self.sigs = dict(p.preds)
        self.offsets: dict[str, int] = {}
        self.shapes: dict[str, tuple[int, ...]] = {}
        self._const_index = {t: {c: i for i, c in enumerate(cs)} for t, cs in p.types.items()}
        off = 0
        for name, sig in p.preds.items():
            shape = tuple(len(p.types[t]) for t in sig.types)
            self.offsets[name] = off
            self.shapes[name] = shape
            off += int(np.prod(shape)) if shape else 1
        self.size = off

    def count(self, pred: str) -> int:
        return int(np.prod(self.shapes[pred])) if self.shapes[pred] else 1

    def slice(self, pred: str) -> slice:
        o = self.offsets[pred]
        return slice(o, o + self.count(pred))

    def const_index(self, type_name: str, const: str) -> int:
        try:
            return self._const_index[type_name][const]
        except KeyError:
            raise KeyError(f"constant {const!r} is not in type {type_name!r}") from None

    def index(self, atom: Atom) -> int:
        sig = self.sigs.get(atom.pred)
        if sig is None:
            raise KeyError(f"unknown predicate {atom.pred!r}")
        if len(atom.args) != sig.arity:
            raise KeyError(f"{atom} has wrong arity")
        coords = [self.const_index(t, a) for t, a in zip(sig.types, atom.args)]
        local = int(np.ravel_multi_index(coords, self.shapes[atom.pred])) if coords else 0
        return self.offsets[atom.pred] + local

    def atom(self, flat: int) -> Atom:
        for name, off in self.offsets.items():
            if off <= flat < off + self.count(name):
                sig = self.sigs[name]
                coords = np.unravel_index(flat - off, self.shapes[name]) if sig.types else ()
                return Atom(name, tuple(self.types[t][int(c)] for t, c in zip(sig.types, coords)))
        raise IndexError(flat)

    def groundings(self, pred: str) -> list[Atom]:
        o = self.offsets[pred]
        return [self.atom(o + k) for k in range(self.count(pred))]


@dataclass
class GatherTable:
    """Gather indices (heads x substitutions x literals) into the mirrored store."""

    index: np.ndarray
    negated: np.ndarray
    literals: tuple[Literal, ...]

    @property
    def head_count(self) -> int:
        return self.index.shape[0]

    @property
    def substitution_count(self) -> int:
        return self.index.shape[1]


def _gather_table(layout: Layout, head_vars, exist_vars, literals) -> GatherTable:
    head_sizes = [len(layout.types[t]) for _, t in head_vars]
    exist_sizes = [len(layout.types[t]) for _, t in exist_vars]
    e = int(np.prod(head_sizes)) if head_sizes else 1
    s = int(np.prod(exist_sizes)) if exist_sizes else 1
    grid = {}
    if head_vars:
        for (v, _), g in zip(head_vars, np.unravel_index(np.arange(e), head_sizes)):
            grid[v] = g[:, None]
    if exist_vars:
        for (v, _), g in zip(exist_vars, np.unravel_index(np.arange(s), exist_sizes)):
            grid[v] = g[None, :]
    cols = []
    for lit in literals:
        sig = layout.sigs[lit.atom.pred]
        shape = layout.shapes[lit.atom.pred]
        strides = [int(np.prod(shape[k + 1:])) for k in range(len(shape))]
        idx = np.full((e, s), layout.offsets[lit.atom.pred], dtype=np.intp)
        for arg, ty, st in zip(lit.atom.args, sig.types, strides):
            coord = grid[arg] if is_variable(arg) else layout.const_index(ty, arg)
            idx = idx + coord * st
        if lit.negated:
            idx = idx + layout.size
        cols.append(np.broadcast_to(idx, (e, s)))
    index = np.stack(cols, axis=-1) if cols else np.zeros((e, s, 0), dtype=np.intp)
    negated = np.array([l.negated for l in literals], dtype=bool)
    return GatherTable(np.ascontiguousarray(index), negated, tuple(literals))


def clause_variables(p: Program, clause) -> tuple[list, list]:
    """(head vars, body-only vars) of an aux clause as (name, type) pairs."""
    types: dict[str, str] = {}
    for atom in (clause.head,) + tuple(l.atom for l in clause.body):
        for a, t in zip(atom.args, p.preds[atom.pred].types):
            if is_variable(a):
                types.setdefault(a, t)
    head = [(v, types[v]) for v in clause.head.args]
    body = sorted((v, t) for v, t in types.items() if v not in clause.head.args)
    return head, body


@dataclass
class IndexPlan:
    program: Program
    layout: Layout
    candidates: dict[str, CandidateAtomSet]
    targets: dict[str, GatherTable]
    aux: dict[str, list[GatherTable]]
    order: list[str]
    recursive: bool
    _engines: dict = field(default_factory=dict, repr=False)

    def forced_mask(self, target: str) -> np.ndarray:
        cands = self.candidates[target]
        mask = np.zeros(len(cands), dtype=bool)
        for lit in self.program.targets[target].forced:
            mask[cands.index(lit)] = True
        return mask


def evaluation_strata(p: Program) -> list[list[str]]:
    """Derived predicates grouped by strongly connected component, in dependency order."""
    dep = dependency_graph(p).reverse(copy=True)
    cond = nx.condensation(dep)
    groups: dict[int, list[str]] = {}
    for n, c in cond.graph["mapping"].items():
        groups.setdefault(c, []).append(n)
    derived = set(p.derived())
    strata = []
    for c in nx.lexicographical_topological_sort(cond, key=lambda c: min(groups[c])):
        names = sorted(n for n in groups[c] if n in derived)
        if names:
            strata.append(names)
    return strata


def evaluation_order(p: Program) -> tuple[list[str], bool]:
    """Derived predicates in dependency order, and whether any are recursive."""
    dep = dependency_graph(p)
    strata = evaluation_strata(p)
    recursive = any(len(s) > 1 or dep.has_edge(s[0], s[0]) for s in strata)
    return [n for s in strata for n in s], recursive


def compile_index_plan(p: Program) -> IndexPlan:
    layout = Layout(p)
    candidates, targets, aux = {}, {}, {}
    for name, spec in p.targets.items():
        cands = enumerate_candidate_atoms(p, name)
        candidates[name] = cands
        targets[name] = _gather_table(layout, spec.head_vars, spec.exist_vars, cands.literals)
    for name in p.derived():
        if p.preds[name].kind != "auxiliary":
            continue
        tables = []
        for clause in p.clauses_for(name):
            head, body = clause_variables(p, clause)
            tables.append(_gather_table(layout, head, body, clause.body))
        aux[name] = tables
    order, recursive = evaluation_order(p)
    return IndexPlan(p, layout, candidates, targets, aux, order, recursive)


@dataclass
class ValuationStore:
    layout: Layout
    values: np.ndarray

    def of(self, pred: str) -> np.ndarray:
        return self.values[self.layout.slice(pred)].reshape(self.layout.shapes[pred])

    def copy(self) -> "ValuationStore":
        return ValuationStore(self.layout, self.values.copy())


def initial_store(plan: IndexPlan, state: dict | None = None) -> ValuationStore:
    """Store holding the program's facts (plus any given state groundings); derived slots 0."""
    lay = plan.layout
    v = np.zeros(lay.size)
    for atom, value in plan.program.facts:
        v[lay.index(atom)] = value
    for pred, arr in (state or {}).items():
        v[lay.slice(pred)] = np.asarray(arr, dtype=np.float64).ravel()
    return ValuationStore(lay, v)


def query_atom(store: ValuationStore, atom: Atom) -> float:
    return float(store.values[store.layout.index(atom)])


class Deducer:
    """Static differentiable graph for ``t_max`` sweeps of forward chaining.

    Non-derived predicates enter as one input vector (the initial store), so
    facts and per-step environment groundings share one path. Target unit
    weights are the graph parameters, laid out target by target.
    """

    def __init__(self, plan: IndexPlan, t_max: int | None = None):
        if t_max is None:
            if plan.recursive:
                raise ValueError("program is recursive; t_max must be given")
            t_max = 1
        if t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {t_max}")
        self.plan = plan
        self.t_max = t_max
        lay = plan.layout
        p = plan.program
        g = self.graph = Graph()
        self.store_in = g.input((lay.size,), "store")
        self.units: dict[str, UnitNodes] = {}
        self.param_slices: dict[str, slice] = {}
        for name in p.targets:
            start = g.n_params
            cands = plan.candidates[name]
            self.units[name] = build_unit(g, p.targets[name].rules, len(cands), plan.forced_mask(name))
            self.param_slices[name] = slice(start, g.n_params)
        pens = [u.penalty for u in self.units.values()]
        self.penalty = pens[0] if pens else g.constant(0.0)
        for extra in pens[1:]:
            self.penalty = g.add(self.penalty, extra)

        derived = set(plan.order)
        current = {}
        for name in p.preds:
            if name in derived:
                current[name] = None
            else:
                current[name] = g.gather(self.store_in, np.arange(lay.slice(name).start, lay.slice(name).stop))
        self._zero = {}
        for sweep in range(t_max):
            for name in plan.order:
                full = g.concat([current[q] if current[q] is not None else self._zeros(q) for q in p.preds])
                ext = g.concat([full, g.one_minus(full)])
                if name in p.targets:
                    new = self._target(ext, name)
                else:
                    new = self._aux(ext, name)
                if current[name] is None:
                    current[name] = new
                else:
                    both = g.reshape(g.concat([current[name], new]), (2, lay.count(name)))
                    current[name] = g.max_reduce(both, axis=0)
        self.out = {n: (v if v is not None else self._zeros(n)) for n, v in current.items()}
        self.store_out = g.concat([self.out[q] for q in p.preds])

    def _zeros(self, pred):
        if pred not in self._zero:
            self._zero[pred] = self.graph.constant(np.zeros(self.plan.layout.count(pred)))
        return self._zero[pred]

    def _target(self, ext, name):
        g = self.graph
        table = self.plan.targets[name]
        unit = self.units[name]
        if table.index.shape[-1] == 0:
            x = g.constant(np.ones(table.index.shape))
        else:
            x = g.gather(ext, table.index)
        rules = g.max_reduce(g.conj(x, unit.conj_m), axis=1)
        return build_disj(g, rules, unit.disj_m)

    def _aux(self, ext, name):
        g = self.graph
        vals = []
        for table in self.plan.aux[name]:
            x = g.gather(ext, table.index)
            vals.append(g.max_reduce(g.prod_reduce(x, axis=-1), axis=1))
        if len(vals) == 1:
            return vals[0]
        e = self.plan.layout.count(name)
        stacked = g.reshape(g.concat(vals), (len(vals), e))
        return g.one_minus(g.prod_reduce(g.one_minus(stacked), axis=0))

    # -- parameters ---------------------------------------------------
    def flatten(self, units: dict[str, DNFUnit]) -> np.ndarray:
        flat = np.zeros(self.graph.n_params)
        for name, sl in self.param_slices.items():
            flat[sl] = units[name].flat()
        return flat

    def unflatten(self, flat, template: dict[str, DNFUnit] | None = None) -> dict[str, DNFUnit]:
        out = {}
        for name, sl in self.param_slices.items():
            spec = self.plan.program.targets[name]
            r, a = spec.rules, len(self.plan.candidates[name])
            w = np.asarray(flat[sl], dtype=np.float64)
            out[name] = DNFUnit(w[:r * a].reshape(r, a).copy(), w[r * a:].copy(), self.plan.forced_mask(name))
        return out

    def init_units(self, rng: np.random.Generator) -> dict[str, DNFUnit]:
        return {name: DNFUnit.init(self.plan.program.targets[name].rules, len(self.plan.candidates[name]),
                                   rng, self.plan.forced_mask(name))
                for name in self.plan.program.targets}

    # -- evaluation ---------------------------------------------------
    def run(self, params, store: ValuationStore, extra_feeds=None, upto=None) -> Evaluation:
        if isinstance(params, dict):
            params = self.flatten(params)
        feeds = {self.store_in: store.values}
        if extra_feeds:
            feeds.update(extra_feeds)
        return self.graph.evaluate(params, feeds, upto=upto)

    def result(self, ev: Evaluation) -> ValuationStore:
        return ValuationStore(self.plan.layout, np.asarray(ev.values[self.store_out]))

    def values(self, ev: Evaluation, pred: str) -> np.ndarray:
        return np.asarray(ev.values[self.out[pred]])


def engine_for(plan: IndexPlan, t_max: int | None = None) -> Deducer:
    key = t_max
    if key not in plan._engines:
        plan._engines[key] = Deducer(plan, t_max)
    return plan._engines[key]


def forward_chain(store: ValuationStore, plan: IndexPlan, units: dict[str, DNFUnit],
                  t_max: int | None = None) -> ValuationStore:
    """Chain ``t_max`` sweeps from ``store``; returns a new store."""
    if t_max is not None and t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    eng = engine_for(plan, t_max)
    return eng.result(eng.run(units, store))
