import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dnlrrl.assets import load_asset
from dnlrrl.deduction import compile_index_plan
from dnlrrl.logic import DNFUnit
from dnlrrl.program import Atom

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SAMPLE_EDGES = [("a", "b"), ("b", "c"), ("c", "d"), ("d", "b")]


def closure(nodes, edges):
    """Floyd-Warshall reachability (paths of length >= 1)."""
    idx = {n: i for i, n in enumerate(nodes)}
    r = np.zeros((len(nodes), len(nodes)), dtype=bool)
    for x, y in edges:
        r[idx[x], idx[y]] = True
    for k in range(len(nodes)):
        r |= r[:, [k]] & r[[k], :]
    return r


def closure_units(plan, weight=50.0):
    """Crisp weights for cnt(X,Y) <- edge(X,Y) ; cnt(X,Y) <- edge(X,Z), cnt(Z,Y)."""
    lits = [str(l) for l in plan.candidates["cnt"].literals]
    w = np.full((2, len(lits)), -weight)
    w[0, lits.index("edge(X,Y)")] = weight
    w[1, lits.index("edge(X,Z)")] = weight
    w[1, lits.index("cnt(Z,Y)")] = weight
    return {"cnt": DNFUnit(w, np.full(2, weight), plan.forced_mask("cnt"))}


def graph_program(nodes, edges):
    """graph_cnt schema over a different node set and edge relation."""
    from dataclasses import replace
    p = load_asset("graph_cnt")
    return replace(p, types={"node": tuple(nodes)},
                   facts=[(Atom("edge", e), 1.0) for e in edges], pos=[], neg=[])


@pytest.fixture(scope="session")
def cnt_program():
    return load_asset("graph_cnt")


@pytest.fixture(scope="session")
def cnt_plan(cnt_program):
    return compile_index_plan(cnt_program)


# -- acceptance report ----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
