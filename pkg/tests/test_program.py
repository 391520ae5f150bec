import pytest
from hypothesis import given, settings, strategies as st

from dnlrrl.assets import asset_text, load_asset
from dnlrrl.program import (Atom, Clause, Constraint, Literal, PredSig, Program, ProgramError,
                            TargetSpec, dependency_graph, enumerate_candidate_atoms, parse_program,
                            print_program, validate_program)

MINI = """
type node { a b c }
pred edge/2 (node,node) extensional
fact edge(a,b).
fact edge(b,c) = 0.25.
target path(X:node,Y:node) vars(Z:node) rules(2)
pos { path(a,b) }
neg { path(c,a) }
"""


def codes(p):
    return {d.code for d in validate_program(p)}


def test_parse_mini_program():
    p = parse_program(MINI)
    assert p.types == {"node": ("a", "b", "c")}
    assert p.preds["path"].kind == "target"
    assert p.facts == [(Atom("edge", ("a", "b")), 1.0), (Atom("edge", ("b", "c")), 0.25)]
    assert p.targets["path"].exist_vars == (("Z", "node"),)
    assert p.pos == [Atom("path", ("a", "b"))]
    assert validate_program(p) == []


def test_print_then_parse_is_identity_on_assets():
    for name in ("graph_cnt", "boxworld_rrl1", "boxworld_rrl2", "boxworld_rrl3", "gridworld", "gridworld_forced"):
        p = parse_program(asset_text(name))
        text = print_program(p)
        assert parse_program(text) == p
        assert print_program(parse_program(text)) == text


@pytest.mark.parametrize("text, code", [
    ("type t { a }\npred p/1 (u) extensional\n", "unknown-type"),
    ("type t { a }\npred p/1 (t) extensional\nfact p(a,a).\n", "arity"),
    ("type t { a }\npred p/1 (t) extensional\nfact p(z).\n", "bad-constant"),
    ("type t { a }\ntype t { b }\n", "duplicate"),
    ("type t { a }\nfact q(a).\n", "unknown-predicate"),
    ("type t { a }\ntype u { b }\npred p/2 (t,u) extensional\npred r/1 (t) auxiliary\naux r(X) :- p(X,X).\n",
     "type-clash"),
    ("type t { a }\npred p/1 (t) extensional\nfact p(a) = 1.5.\n", "bad-value"),
    ("type t { a\n", "syntax"),
    ("type t { a }\npred p/1 (t) wobbly\n", "syntax"),
])
def test_parse_errors_carry_codes(text, code):
    with pytest.raises(ProgramError) as exc:
        parse_program(text)
    assert exc.value.code == code


def test_syntax_error_reports_position():
    with pytest.raises(ProgramError) as exc:
        parse_program("type t { a }\npred p/1 (t) extensional\nfact p(a\n")
    assert (exc.value.line, exc.value.col) == (4, 1)


def test_validate_flags_unstratified_negation():
    p = parse_program("""
type t { a b }
pred e/1 (t) extensional
pred p/1 (t) auxiliary
pred q/1 (t) auxiliary
aux p(X) :- e(X), !q(X).
aux q(X) :- e(X), !p(X).
""")
    assert "stratification" in codes(p)


def test_validate_flags_aux_without_clauses_and_facts_on_aux():
    p = parse_program("""
type t { a }
pred p/1 (t) auxiliary
""")
    assert codes(p) == {"undefined"}
    p.facts.append((Atom("p", ("a",)), 1.0))
    assert codes(p) == {"undefined", "kind"}


def test_validate_forced_literal_checks():
    p = parse_program(MINI)
    spec = p.targets["path"]
    from dataclasses import replace
    bad = replace(p, targets={"path": replace(spec, forced=(Literal(Atom("edge", ("X", "Q"))),))})
    assert validate_program(bad)
    excluded = replace(p, targets={"path": replace(spec, forced=(Literal(Atom("edge", ("X", "Y"))),),
                                                   exclude=("edge",))})
    assert validate_program(excluded)
    negated = replace(p, targets={"path": replace(spec, forced=(Literal(Atom("edge", ("X", "Y")), True),))})
    assert validate_program(negated)


def test_example_constants_are_type_checked():
    p = parse_program(MINI)
    p.pos.append(Atom("path", ("a", "zz")))
    assert validate_program(p)
    p.pos[-1] = Atom("path", ("a", "X"))
    assert validate_program(p)


def test_candidate_atoms_for_cnt(cnt_program):
    cands = enumerate_candidate_atoms(cnt_program, "cnt")
    assert len(cands) == 17
    assert str(cands.literals[0]) == "cnt(X,X)"
    assert Literal(Atom("cnt", ("X", "Y"))) not in cands.literals
    assert cands.index(Literal(Atom("edge", ("X", "Z")))) == 10


def test_candidate_atoms_with_negation_double(cnt_program):
    from dataclasses import replace
    spec = replace(cnt_program.targets["cnt"], negation=True)
    p = replace(cnt_program, targets={"cnt": spec})
    assert len(enumerate_candidate_atoms(p, "cnt")) == 34


def test_candidate_enumeration_is_order_stable():
    a = enumerate_candidate_atoms(load_asset("boxworld_rrl2"), "move")
    b = enumerate_candidate_atoms(parse_program(print_program(load_asset("boxworld_rrl2"))), "move")
    assert a.literals == b.literals


def test_degenerate_target_warns():
    p = parse_program("""
type t { a }
target g(X:t) rules(1) exclude(g)
""")
    cands = enumerate_candidate_atoms(p, "g")
    assert len(cands) == 0 and cands.warnings


def test_dependency_graph_marks_negative_edges():
    g = dependency_graph(load_asset("boxworld_rrl2"), include_targets=False)
    assert g.edges["isCovered", "isFloor"]["negative"]
    assert not g.edges["on", "sameH"]["negative"]


# -- fuzzed round trip ------------------------------------------------------

names = st.sampled_from(["p", "q", "r", "s", "edge", "onTop", "big_one", "v2"])


@st.composite
def programs(draw):
    n_types = draw(st.integers(1, 3))
    types = {}
    for i in range(n_types):
        k = draw(st.integers(1, 4))
        consts = draw(st.lists(st.sampled_from(["a", "b", "c", "d", "e", "0", "1", "2", "x_1"]),
                               min_size=k, max_size=k, unique=True))
        types[f"t{i}"] = tuple(f"{c}{i}" if c[0].isalpha() else c + str(i) for c in consts)
    tnames = list(types)
    preds = {}
    n_preds = draw(st.integers(1, 5))
    for i in range(n_preds):
        kind = draw(st.sampled_from(["extensional", "state", "auxiliary"]))
        arity = draw(st.integers(0, 3))
        sig_types = tuple(draw(st.sampled_from(tnames)) for _ in range(arity))
        preds[f"{draw(names)}{i}"] = PredSig(f"{draw(names)}{i}", sig_types, kind)
    preds = {s.name: s for s in preds.values()}
    base = [s for s in preds.values() if s.kind != "auxiliary"]
    facts = []
    for s in base:
        for _ in range(draw(st.integers(0, 3))):
            args = tuple(draw(st.sampled_from(types[t])) for t in s.types)
            value = draw(st.sampled_from([1.0, 0.0, 0.5, 0.125, 1 / 3]))
            facts.append((Atom(s.name, args), value))
    aux = []
    variables = ["X", "Y", "Z", "T"]
    for s in preds.values():
        if s.kind != "auxiliary":
            continue
        head = Atom(s.name, tuple(variables[:s.arity]))
        vt = dict(zip(head.args, s.types))
        body = []
        for _ in range(draw(st.integers(0, 3))):
            b = draw(st.sampled_from(list(preds.values())))
            args = []
            for t in b.types:
                usable = [v for v, vt_ in vt.items() if vt_ == t]
                choice = draw(st.sampled_from(usable + ["FRESH", "CONST"]))
                if choice == "CONST":
                    args.append(draw(st.sampled_from(types[t])))
                elif choice == "FRESH":
                    v = f"V{len(vt)}"
                    vt[v] = t
                    args.append(v)
                else:
                    args.append(choice)
            body.append(Literal(Atom(b.name, tuple(args)), draw(st.booleans())))
        aux.append(Clause(head, tuple(body)))
    targets = {}
    if draw(st.booleans()):
        t = draw(st.sampled_from(tnames))
        head_vars = (("X", t),) + ((("Y", draw(st.sampled_from(tnames))),) if draw(st.booleans()) else ())
        exist = (("Z", draw(st.sampled_from(tnames))),) if draw(st.booleans()) else ()
        exclude = tuple(sorted(draw(st.sets(st.sampled_from(list(preds)), max_size=2))))
        spec = TargetSpec("goal", head_vars, exist, draw(st.integers(1, 4)), draw(st.booleans()), (), exclude)
        targets["goal"] = spec
        preds["goal"] = PredSig("goal", tuple(ty for _, ty in head_vars), "target")
    constraints = []
    for s in base[:1]:
        args = tuple(draw(st.sampled_from(types[t])) for t in s.types)
        constraints.append(Constraint(Literal(Atom(s.name, args), draw(st.booleans())), draw(st.sampled_from([0, 1]))))
    pos, neg = [], []
    if targets:
        spec = targets["goal"]
        for bucket in (pos, neg):
            for _ in range(draw(st.integers(0, 2))):
                bucket.append(Atom("goal", tuple(draw(st.sampled_from(types[t])) for _, t in spec.head_vars)))
    return Program(types, preds, facts, aux, targets, constraints, pos, neg)


@settings(max_examples=1000)
@given(programs())
def test_round_trip_fuzzed_programs(p):
    text = print_program(p)
    q = parse_program(text)
    assert q == p
    assert print_program(q) == text
