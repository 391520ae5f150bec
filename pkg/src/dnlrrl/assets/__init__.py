"""Bundled DSL programs."""
from __future__ import annotations

import string
from dataclasses import replace
from pathlib import Path

from ..program import Atom, Program, ProgramError, parse_program, validate_program

ASSET_DIR = Path(__file__).resolve().parent
CATALOG = ("graph_cnt", "boxworld_rrl1", "boxworld_rrl2", "boxworld_rrl3", "gridworld", "gridworld_forced")


def asset_path(name: str) -> Path:
    if name not in CATALOG:
        raise KeyError(f"unknown asset {name!r}; known: {', '.join(CATALOG)}")
    return ASSET_DIR / f"{name}.dnl"


def asset_text(name: str) -> str:
    return asset_path(name).read_text()


def load_asset(name: str, n: int | None = None) -> Program:
    """Parse and validate a bundled program.

    ``n`` resizes a BoxWorld program to ``n`` boxes; background facts are
    regenerated for the new constants.
    """
    p = parse_program(asset_text(name))
    if n is not None:
        if not name.startswith("boxworld"):
            raise ValueError(f"n only applies to boxworld assets, not {name!r}")
        p = boxworld_resize(p, n)
    problems = validate_program(p)
    if problems:
        raise ProgramError(problems[0].code, f"asset {name}: {problems[0].message}")
    return p


def boxworld_types(n: int) -> dict[str, tuple[str, ...]]:
    return {"box": tuple(string.ascii_lowercase[:n]) + ("floor",),
            "pos": tuple(str(i) for i in range(n + 1))}


def boxworld_facts(n: int) -> list[tuple[Atom, float]]:
    types = boxworld_types(n)
    facts = [Atom("isFloor", ("floor",)), Atom("isBlue", ("a",)), Atom("isV1", ("1",))]
    facts += [Atom("inc", (str(i), str(i + 1))) for i in range(n)]
    facts += [Atom("lt", (str(i), str(j))) for i in range(n + 1) for j in range(i + 1, n + 1)]
    facts += [Atom("same", (b, b)) for b in types["box"]]
    return [(a, 1.0) for a in facts]


def boxworld_resize(p: Program, n: int) -> Program:
    if n not in (3, 4, 5):
        raise ValueError(f"boxworld supports n in {{3,4,5}}, got {n}")
    return replace(p, types=boxworld_types(n), facts=boxworld_facts(n))
