"""Typed logic programs: data model, text DSL, validation, candidate atoms."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

import networkx as nx

KINDS = ("extensional", "state", "auxiliary", "target")


class ProgramError(Exception):
    """A diagnostic raised while parsing or resolving a program."""

    def __init__(self, code: str, message: str, line: int | None = None, col: int | None = None):
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{where}[{code}] {message}")
        self.code = code
        self.line = line
        self.col = col
        self.message = message


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.message}"


def is_variable(term: str) -> bool:
    return term[:1].isupper()


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return f"{self.pred}({','.join(self.args)})"


@dataclass(frozen=True)
class Literal:
    atom: Atom
    negated: bool = False

    def __str__(self):
        return ("!" if self.negated else "") + str(self.atom)


@dataclass(frozen=True)
class PredSig:
    name: str
    types: tuple[str, ...]
    kind: str

    @property
    def arity(self) -> int:
        return len(self.types)


@dataclass(frozen=True)
class Clause:
    head: Atom
    body: tuple[Literal, ...]

    def __str__(self):
        if not self.body:
            return str(self.head)
        return f"{self.head} :- {', '.join(map(str, self.body))}"


@dataclass(frozen=True)
class TargetSpec:
    name: str
    head_vars: tuple[tuple[str, str], ...]
    exist_vars: tuple[tuple[str, str], ...] = ()
    rules: int = 1
    negation: bool = False
    forced: tuple[Literal, ...] = ()
    exclude: tuple[str, ...] = ()

    @property
    def variables(self) -> tuple[tuple[str, str], ...]:
        return self.head_vars + self.exist_vars

    @property
    def head(self) -> Atom:
        return Atom(self.name, tuple(v for v, _ in self.head_vars))


@dataclass(frozen=True)
class Constraint:
    literal: Literal
    value: int


@dataclass
class Program:
    types: dict[str, tuple[str, ...]] = field(default_factory=dict)
    preds: dict[str, PredSig] = field(default_factory=dict)
    facts: list[tuple[Atom, float]] = field(default_factory=list)
    aux: list[Clause] = field(default_factory=list)
    targets: dict[str, TargetSpec] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    pos: list[Atom] = field(default_factory=list)
    neg: list[Atom] = field(default_factory=list)

    def derived(self) -> list[str]:
        return [p for p, s in self.preds.items() if s.kind in ("auxiliary", "target")]

    def clauses_for(self, pred: str) -> list[Clause]:
        return [c for c in self.aux if c.head.pred == pred]


# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>-?\d+\.\d+(?:[eE][-+]?\d+)?|-?\d+[eE][-+]?\d+)
  | (?P<name>[A-Za-z0-9_]+)
  | (?P<punct>:-|[(){},.:/=!])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks, line, start, pos = [], 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ProgramError("syntax", f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    STATEMENTS = ("type", "pred", "fact", "aux", "target", "constraint", "pos", "neg")

    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ProgramError("syntax", msg, tok.line, tok.col)

    def next(self):
        t = self.tok
        self.i += 1
        return t

    def expect(self, text=None, kind=None):
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text is not None else kind
            raise self.error(f"expected {want}, found {t.text!r}" if t.kind != "eof" else f"expected {want}, found end of input")
        return self.next()

    def accept(self, text):
        if self.tok.text == text and self.tok.kind == "punct":
            return self.next()
        return None

    def name(self):
        return self.expect(kind="name")

    def atom(self):
        head = self.name()
        args = []
        self.expect("(")
        if not self.accept(")"):
            while True:
                args.append(self.name().text)
                if self.accept(")"):
                    break
                self.expect(",")
        return Atom(head.text, tuple(args)), head

    def literal(self):
        neg = bool(self.accept("!"))
        atom, tok = self.atom()
        return Literal(atom, neg), tok

    def end(self):
        self.accept(".")

    def statements(self):
        out = []
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind != "name" or t.text not in self.STATEMENTS:
                raise self.error(f"unknown statement {t.text!r}")
            self.next()
            out.append((t, getattr(self, "st_" + t.text)()))
        return out

    def st_type(self):
        name = self.name()
        self.expect("{")
        consts = []
        while not self.accept("}"):
            consts.append(self.name())
        self.end()
        return name, consts

    def st_pred(self):
        name = self.name()
        self.expect("/")
        arity = self.name()
        if not arity.text.isdigit():
            raise self.error("arity must be an integer", arity)
        types = []
        self.expect("(")
        if not self.accept(")"):
            while True:
                types.append(self.name())
                if self.accept(")"):
                    break
                self.expect(",")
        kind = self.name()
        if kind.text not in KINDS:
            raise self.error(f"unknown predicate kind {kind.text!r}", kind)
        self.end()
        return name, int(arity.text), types, kind.text

    def _value(self):
        t = self.tok
        if t.kind not in ("num", "name"):
            raise self.error("expected a number")
        self.next()
        try:
            return float(t.text), t
        except ValueError:
            raise self.error(f"bad number {t.text!r}", t) from None

    def st_fact(self):
        atom, tok = self.atom()
        value = 1.0
        if self.accept("="):
            value, _ = self._value()
        self.end()
        return atom, tok, value

    def st_aux(self):
        head, htok = self.atom()
        body = []
        if self.accept(":-"):
            while True:
                body.append(self.literal()[0])
                if not self.accept(","):
                    break
        self.end()
        return Clause(head, tuple(body)), htok

    def _typed_vars(self):
        out = []
        self.expect("(")
        if self.accept(")"):
            return out
        while True:
            v = self.name()
            self.expect(":")
            ty = self.name()
            out.append((v, ty))
            if self.accept(")"):
                return out
            self.expect(",")

    def st_target(self):
        name = self.name()
        head = self._typed_vars()
        opts = {"vars": [], "rules": None, "negation": False, "force": [], "exclude": []}
        while self.tok.kind == "name" and self.tok.text in ("vars", "rules", "negation", "force", "exclude"):
            key = self.next().text
            if key == "vars":
                opts["vars"] = self._typed_vars()
            elif key == "rules":
                self.expect("(")
                r = self.name()
                if not r.text.isdigit() or int(r.text) < 1:
                    raise self.error("rule count must be a positive integer", r)
                opts["rules"] = int(r.text)
                self.expect(")")
            elif key == "negation":
                opts["negation"] = True
            elif key == "force":
                self.expect("(")
                opts["force"].append(self.literal()[0])
                self.expect(")")
            else:
                self.expect("(")
                while True:
                    opts["exclude"].append(self.name().text)
                    if self.accept(")"):
                        break
                    self.expect(",")
        self.end()
        return name, head, opts

    def st_constraint(self):
        lit, tok = self.literal()
        self.expect("=")
        value, vtok = self._value()
        if value not in (0.0, 1.0):
            raise self.error("constraint value must be 0 or 1", vtok)
        self.end()
        return Constraint(lit, int(value)), tok

    def _atom_block(self):
        self.expect("{")
        atoms = []
        while not self.accept("}"):
            atoms.append(self.atom())
            self.accept(".")
        self.end()
        return atoms

    st_pos = _atom_block
    st_neg = _atom_block


def _check_atom(p: Program, atom: Atom, tok, allow_vars=False, var_types=None):
    sig = p.preds.get(atom.pred)
    if sig is None:
        raise ProgramError("unknown-predicate", f"predicate {atom.pred!r} is not declared", tok.line, tok.col)
    if sig.arity != len(atom.args):
        raise ProgramError("arity", f"{atom.pred} has arity {sig.arity}, used with {len(atom.args)} arguments",
                           tok.line, tok.col)
    for arg, ty in zip(atom.args, sig.types):
        if is_variable(arg):
            if not allow_vars:
                raise ProgramError("syntax", f"variable {arg} not allowed in ground atom {atom}", tok.line, tok.col)
            if var_types is not None:
                prev = var_types.setdefault(arg, ty)
                if prev != ty:
                    raise ProgramError("type-clash", f"variable {arg} used as {prev} and {ty}", tok.line, tok.col)
        elif arg not in p.types[ty]:
            raise ProgramError("bad-constant", f"constant {arg!r} is not in declared type {ty!r} ({atom})",
                               tok.line, tok.col)


def parse_program(text: str) -> Program:
    """Parse DSL text into a Program; raises ProgramError with a diagnostic code."""
    stmts = _Parser(text).statements()
    p = Program()

    for kw, body in stmts:
        if kw.text == "type":
            name, consts = body
            if name.text in p.types:
                raise ProgramError("duplicate", f"type {name.text!r} declared twice", name.line, name.col)
            names = [c.text for c in consts]
            for c in consts:
                if is_variable(c.text):
                    raise ProgramError("syntax", f"constant {c.text!r} must not start uppercase", c.line, c.col)
            if len(set(names)) != len(names):
                raise ProgramError("duplicate", f"type {name.text!r} repeats a constant", name.line, name.col)
            p.types[name.text] = tuple(names)

    def declare(name_tok, types, kind):
        name = name_tok.text
        if name in p.preds:
            raise ProgramError("duplicate", f"predicate {name!r} declared twice", name_tok.line, name_tok.col)
        p.preds[name] = PredSig(name, tuple(types), kind)

    for kw, body in stmts:
        if kw.text == "pred":
            name, arity, types, kind = body
            if arity != len(types):
                raise ProgramError("arity", f"{name.text}/{arity} declared with {len(types)} types", name.line, name.col)
            for t in types:
                if t.text not in p.types:
                    raise ProgramError("unknown-type", f"unknown type {t.text!r}", t.line, t.col)
            declare(name, [t.text for t in types], kind)

    for kw, body in stmts:
        if kw.text == "target":
            name, head, opts = body
            for v, t in head + opts["vars"]:
                if t.text not in p.types:
                    raise ProgramError("unknown-type", f"unknown type {t.text!r}", t.line, t.col)
                if not is_variable(v.text):
                    raise ProgramError("syntax", f"{v.text!r} is not a variable", v.line, v.col)
            names = [v.text for v, _ in head + opts["vars"]]
            if len(set(names)) != len(names):
                raise ProgramError("duplicate", f"target {name.text} repeats a variable", name.line, name.col)
            types = [t.text for _, t in head]
            if name.text in p.preds:
                sig = p.preds[name.text]
                if sig.kind != "target" or sig.types != tuple(types):
                    raise ProgramError("duplicate", f"target {name.text!r} conflicts with its declaration",
                                       name.line, name.col)
            else:
                declare(name, types, "target")
            if name.text in p.targets:
                raise ProgramError("duplicate", f"target {name.text!r} specified twice", name.line, name.col)
            p.targets[name.text] = TargetSpec(
                name.text,
                tuple((v.text, t.text) for v, t in head),
                tuple((v.text, t.text) for v, t in opts["vars"]),
                opts["rules"] or 1,
                opts["negation"],
                tuple(opts["force"]),
                tuple(opts["exclude"]),
            )

    for kw, body in stmts:
        if kw.text == "fact":
            atom, tok, value = body
            _check_atom(p, atom, tok)
            if not 0.0 <= value <= 1.0:
                raise ProgramError("bad-value", f"fact value {value} outside [0,1]", tok.line, tok.col)
            p.facts.append((atom, value))
        elif kw.text == "aux":
            clause, tok = body
            sig = p.preds.get(clause.head.pred)
            if sig is not None and sig.kind != "auxiliary":
                raise ProgramError("kind", f"{clause.head.pred} is {sig.kind}, not auxiliary", tok.line, tok.col)
            var_types: dict[str, str] = {}
            _check_atom(p, clause.head, tok, allow_vars=True, var_types=var_types)
            if not all(is_variable(a) for a in clause.head.args) or len(set(clause.head.args)) != len(clause.head.args):
                raise ProgramError("syntax", f"clause head {clause.head} must use distinct variables",
                                   tok.line, tok.col)
            for lit in clause.body:
                _check_atom(p, lit.atom, tok, allow_vars=True, var_types=var_types)
            p.aux.append(clause)
        elif kw.text == "constraint":
            con, tok = body
            _check_atom(p, con.literal.atom, tok, allow_vars=True, var_types={})
            p.constraints.append(con)
        elif kw.text in ("pos", "neg"):
            for atom, tok in body:
                _check_atom(p, atom, tok)
                getattr(p, kw.text).append(atom)
    return p


# -- printing ---------------------------------------------------------------

def _fmt_value(v: float) -> str:
    r = repr(float(v))
    return r if "." in r or "e" in r else r + ".0"


def print_program(p: Program) -> str:
    """Canonical text form; ``parse_program(print_program(p)) == p``."""
    out = []
    for name, consts in p.types.items():
        out.append(f"type {name} {{")
        out.append("  " + " ".join(consts))
        out.append("}")
    for sig in p.preds.values():
        out.append(f"pred {sig.name}/{sig.arity} ({','.join(sig.types)}) {sig.kind}")
    for atom, value in p.facts:
        out.append(f"fact {atom}." if value == 1.0 else f"fact {atom} = {_fmt_value(value)}.")
    for clause in p.aux:
        out.append(f"aux {clause}.")
    for t in p.targets.values():
        parts = [f"target {t.name}({','.join(f'{v}:{ty}' for v, ty in t.head_vars)})"]
        if t.exist_vars:
            parts.append(f"vars({','.join(f'{v}:{ty}' for v, ty in t.exist_vars)})")
        parts.append(f"rules({t.rules})")
        if t.negation:
            parts.append("negation")
        parts += [f"force({lit})" for lit in t.forced]
        if t.exclude:
            parts.append(f"exclude({','.join(t.exclude)})")
        out.append(" ".join(parts))
    for c in p.constraints:
        out.append(f"constraint {c.literal} = {c.value}.")
    for key in ("pos", "neg"):
        atoms = getattr(p, key)
        if atoms:
            out.append(f"{key} {{")
            out += [f"  {a}" for a in atoms]
            out.append("}")
    return "\n".join(out) + ("\n" if out else "")


# -- validation -------------------------------------------------------------

def dependency_graph(p: Program, include_targets: bool = True) -> nx.DiGraph:
    """Edges ``head -> body predicate`` with a ``negative`` flag."""
    g = nx.DiGraph()
    g.add_nodes_from(p.preds)
    for c in p.aux:
        for lit in c.body:
            neg = g.edges[c.head.pred, lit.atom.pred]["negative"] if g.has_edge(c.head.pred, lit.atom.pred) else False
            g.add_edge(c.head.pred, lit.atom.pred, negative=neg or lit.negated)
    if include_targets:
        for t in p.targets.values():
            for name in p.preds:
                if name not in t.exclude:
                    g.add_edge(t.name, name, negative=t.negation)
    return g


def validate_program(p: Program) -> list[Diagnostic]:
    """All problems found in ``p``; an empty list means the program is valid."""
    report: list[Diagnostic] = []

    def bad(code, msg):
        report.append(Diagnostic(code, msg))

    for sig in p.preds.values():
        for t in sig.types:
            if t not in p.types:
                bad("unknown-type", f"{sig.name} uses unknown type {t!r}")
        if sig.kind not in KINDS:
            bad("kind", f"{sig.name} has unknown kind {sig.kind!r}")

    def check_ground(atom, what):
        sig = p.preds.get(atom.pred)
        if sig is None:
            bad("unknown-predicate", f"{what} {atom} uses undeclared predicate")
            return
        if sig.arity != len(atom.args):
            bad("arity", f"{what} {atom} has wrong arity")
            return
        for a, t in zip(atom.args, sig.types):
            if a not in p.types.get(t, ()):
                bad("bad-constant", f"{what} {atom}: {a!r} not in type {t!r}")

    for atom, value in p.facts:
        check_ground(atom, "fact")
        if atom.pred in p.preds and p.preds[atom.pred].kind not in ("extensional", "state"):
            bad("kind", f"fact {atom} asserts a derived predicate")
    for atom in p.pos + p.neg:
        check_ground(atom, "example")

    for c in p.aux:
        sig = p.preds.get(c.head.pred)
        if sig is None or sig.kind != "auxiliary":
            bad("kind", f"clause head {c.head.pred} is not an auxiliary predicate")
        var_types: dict[str, str] = {}
        for atom in (c.head,) + tuple(l.atom for l in c.body):
            s = p.preds.get(atom.pred)
            if s is None or s.arity != len(atom.args):
                bad("arity", f"clause {c}: bad atom {atom}")
                continue
            for a, t in zip(atom.args, s.types):
                if is_variable(a):
                    if var_types.setdefault(a, t) != t:
                        bad("type-clash", f"clause {c}: variable {a} has two types")
                elif a not in p.types.get(t, ()):
                    bad("bad-constant", f"clause {c}: {a!r} not in type {t!r}")
    for name, sig in p.preds.items():
        if sig.kind == "auxiliary" and not p.clauses_for(name):
            bad("undefined", f"auxiliary predicate {name} has no clauses")

    # stratified negation over the clause graph
    g = dependency_graph(p, include_targets=False)
    comp = {}
    for k, scc in enumerate(nx.strongly_connected_components(g)):
        for n in scc:
            comp[n] = k
    for a, b, d in g.edges(data=True):
        if d["negative"] and comp[a] == comp[b]:
            bad("stratification", f"{a} depends negatively on {b} inside a recursive cycle")

    for t in p.targets.values():
        names = {v for v, _ in t.variables}
        for v, ty in t.variables:
            if ty not in p.types:
                bad("unknown-type", f"target {t.name}: variable {v} has unknown type {ty!r}")
        for e in t.exclude:
            if e not in p.preds:
                bad("unknown-predicate", f"target {t.name} excludes undeclared {e!r}")
        for lit in t.forced:
            s = p.preds.get(lit.atom.pred)
            if s is None:
                bad("unknown-predicate", f"target {t.name}: forced literal {lit} uses undeclared predicate")
                continue
            if any(a not in names for a in lit.atom.args):
                bad("forced-variable", f"target {t.name}: forced literal {lit} uses variables outside the target")
                continue
            if lit.atom.pred in t.exclude:
                bad("forced-excluded", f"target {t.name}: forced literal {lit} uses an excluded predicate")
            if lit.negated and not t.negation:
                bad("forced-negation", f"target {t.name}: forced literal {lit} needs negation enabled")
            vt = dict(t.variables)
            if s.arity != len(lit.atom.args) or any(vt[a] != ty for a, ty in zip(lit.atom.args, s.types)):
                bad("type-clash", f"target {t.name}: forced literal {lit} is not type-correct")

    for c in p.constraints:
        atom = c.literal.atom
        s = p.preds.get(atom.pred)
        if s is None:
            bad("unknown-predicate", f"constraint on undeclared predicate {atom.pred!r}")
        elif s.arity != len(atom.args):
            bad("arity", f"constraint {c.literal} has wrong arity")
    return report


# -- candidate atoms --------------------------------------------------------

@dataclass(frozen=True)
class CandidateAtomSet:
    owner: str
    literals: tuple[Literal, ...]
    warnings: tuple[str, ...] = ()

    def __len__(self):
        return len(self.literals)

    def index(self, lit: Literal) -> int:
        return self.literals.index(lit)


def enumerate_candidate_atoms(p: Program, target: str) -> CandidateAtomSet:
    if target not in p.targets:
        raise KeyError(f"unknown target {target!r}")
    t = p.targets[target]
    by_type: dict[str, list[str]] = {}
    for v, ty in t.variables:
        by_type.setdefault(ty, []).append(v)
    for vs in by_type.values():
        vs.sort()
    lits = []
    for name in sorted(p.preds):
        if name in t.exclude:
            continue
        sig = p.preds[name]
        choices = [by_type.get(ty, []) for ty in sig.types]
        for combo in itertools.product(*choices):
            atom = Atom(name, tuple(combo))
            if atom == t.head:
                continue
            lits.append(Literal(atom, False))
            if t.negation:
                lits.append(Literal(atom, True))
    warnings = () if lits else (f"degenerate hypothesis space: target {target} has no candidate atoms",)
    return CandidateAtomSet(target, tuple(lits), warnings)
