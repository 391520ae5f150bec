"""Crisp clauses from trained units, and a symbolic check against the fuzzy engine."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .deduction import IndexPlan, compile_index_plan, engine_for, initial_store
from .logic import DNFUnit, crispness, threshold_weights
from .program import Atom, CandidateAtomSet, Clause, Program, is_variable

CRISP_WEIGHT = 40.0


@dataclass
class ExtractedRules:
    target: str
    clauses: list[Clause]
    crispness: float

    def to_dsl(self) -> str:
        return "".join(f"aux {c}.\n" for c in self.clauses)


def extract_rules(units: dict[str, DNFUnit], candidates: dict[str, CandidateAtomSet],
                  threshold: float = 0.5, heads: dict[str, Atom] | None = None) -> dict[str, ExtractedRules]:
    """One clause per active rule, body = literals at or above ``threshold``."""
    out = {}
    for name, unit in units.items():
        cands = candidates[name]
        include, active = threshold_weights(unit, threshold)
        head = heads[name] if heads else _head_from(cands, name)
        clauses = []
        for r in range(unit.rule_count):
            if not active[r]:
                continue
            body = tuple(cands.literals[j] for j in np.flatnonzero(include[r]))
            clauses.append(Clause(head, body))
        out[name] = ExtractedRules(name, clauses, crispness(unit))
    return out


def _head_from(cands: CandidateAtomSet, name: str) -> Atom:
    raise ValueError(f"head atom for {name!r} must be supplied")


def extract_program_rules(p: Program, units: dict[str, DNFUnit], threshold: float = 0.5,
                          plan: IndexPlan | None = None) -> dict[str, ExtractedRules]:
    plan = plan or compile_index_plan(p)
    return extract_rules(units, plan.candidates, threshold, {n: t.head for n, t in p.targets.items()})


def crisp_units(units: dict[str, DNFUnit], threshold: float = 0.5) -> dict[str, DNFUnit]:
    """Units whose memberships are exactly the thresholded masks."""
    out = {}
    for name, u in units.items():
        inc, act = threshold_weights(u, threshold)
        out[name] = DNFUnit(np.where(inc, CRISP_WEIGHT, -CRISP_WEIGHT),
                            np.where(act, CRISP_WEIGHT, -CRISP_WEIGHT), u.forced.copy())
    return out


# -- symbolic interpreter ---------------------------------------------------

def crisp_fixpoint(p: Program, extra_clauses=(), state: dict[str, set] | None = None,
                   max_rounds: int = 1000) -> dict[str, set]:
    """Naive bottom-up evaluation with Boolean semantics.

    Facts with value >= 0.5 are true. ``extra_clauses`` define the targets.
    Clauses are applied in rounds until nothing changes; negation reads the
    current relation, which is exact for stratified programs evaluated in
    dependency order.
    """
    from .deduction import evaluation_strata

    rel: dict[str, set] = {name: set() for name in p.preds}
    for atom, value in p.facts:
        if value >= 0.5:
            rel[atom.pred].add(atom.args)
    for pred, tuples in (state or {}).items():
        rel[pred] = set(tuples)
    clauses = list(p.aux) + list(extra_clauses)
    for stratum in evaluation_strata(p):
        group = [_compile_clause(p, c) for c in clauses if c.head.pred in stratum]
        for _ in range(max_rounds):
            changed = False
            for head_pred, fn in group:
                new = fn(rel) - rel[head_pred]
                if new:
                    rel[head_pred] |= new
                    changed = True
            if not changed:
                break
    return rel


def _compile_clause(p: Program, clause: Clause):
    types: dict[str, str] = {}
    for atom in (clause.head,) + tuple(l.atom for l in clause.body):
        for a, t in zip(atom.args, p.preds[atom.pred].types):
            if is_variable(a):
                types.setdefault(a, t)
    variables = sorted(types)
    domains = [p.types[types[v]] for v in variables]

    def run(rel):
        out = set()
        for combo in itertools.product(*domains):
            b = dict(zip(variables, combo))
            ok = True
            for lit in clause.body:
                args = tuple(b[a] if is_variable(a) else a for a in lit.atom.args)
                if (args in rel[lit.atom.pred]) == lit.negated:
                    ok = False
                    break
            if ok:
                out.add(tuple(b[a] for a in clause.head.args))
        return out

    return clause.head.pred, run


@dataclass
class EquivalenceReport:
    checked: int = 0
    disagreements: list[tuple[int, Atom, bool, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.disagreements

    def __str__(self):
        lines = [f"checked {self.checked} groundings, {len(self.disagreements)} disagreements"]
        for inst, atom, crisp, fuzzy in self.disagreements[:20]:
            lines.append(f"  instance {inst}: {atom} symbolic={int(crisp)} fuzzy={fuzzy:.4f}")
        return "\n".join(lines)


def random_instance(p: Program, rng: np.random.Generator, density: float = 0.3) -> Program:
    """Same types and rules, fresh random extensional/state facts."""
    from dataclasses import replace

    facts = []
    for name, sig in p.preds.items():
        if sig.kind not in ("extensional", "state"):
            continue
        for combo in itertools.product(*(p.types[t] for t in sig.types)):
            if rng.random() < density:
                facts.append((Atom(name, combo), 1.0))
    return replace(p, facts=facts, aux=list(p.aux), targets=dict(p.targets), constraints=[], pos=[], neg=[])


def verify_crisp_equivalence(clauses: dict[str, ExtractedRules | list[Clause]] | list[Clause], p: Program,
                             units: dict[str, DNFUnit] | None = None, trials: int = 0, seed: int = 0,
                             threshold: float = 0.5, instances=None, t_max: int | None = None) -> EquivalenceReport:
    """Compare symbolic evaluation of ``clauses`` with the fuzzy engine at thresholded weights.

    Checks the program's own facts plus ``trials`` random instances (or the
    given ``instances``). With ``units=None`` the fuzzy side uses all-zero
    memberships (every target false).
    """
    if isinstance(clauses, dict):
        clauses = [c for cs in clauses.values() for c in getattr(cs, "clauses", cs)]
    rng = np.random.default_rng(seed)
    progs = [p]
    if instances is not None:
        progs += list(instances)
    else:
        progs += [random_instance(p, rng) for _ in range(trials)]
    report = EquivalenceReport()
    for k, prog in enumerate(progs):
        plan = compile_index_plan(prog)
        if units is None:
            fuzzy_units = {n: DNFUnit(np.full((t.rules, len(plan.candidates[n])), -CRISP_WEIGHT),
                                      np.full(t.rules, -CRISP_WEIGHT), plan.forced_mask(n))
                           for n, t in prog.targets.items()}
        else:
            fuzzy_units = crisp_units(units, threshold)
        steps = t_max
        if steps is None:
            steps = 1 + (sum(plan.layout.count(n) for n in plan.order) if plan.recursive else 0)
        eng = engine_for(plan, steps)
        ev = eng.run(fuzzy_units, initial_store(plan))
        sym = crisp_fixpoint(prog, clauses)
        for name in prog.targets:
            vals = eng.values(ev, name).ravel()
            for i, atom in enumerate(plan.layout.groundings(name)):
                report.checked += 1
                crisp = atom.args in sym[name]
                if crisp != (vals[i] >= 0.5):
                    report.disagreements.append((k, atom, crisp, float(vals[i])))
    return report
