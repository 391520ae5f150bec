"""Plain-text checkpoints for trained units.

Layout::

    dnl-ckpt v1
    meta <key>=<value>            (any number)
    target <name> <rules> <atoms> <fingerprint>
    w <atoms weights>             (one line per rule)
    d <rules weights>

Weights are written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .logic import DNFUnit
from .program import CandidateAtomSet

HEADER = "dnl-ckpt v1"


class CheckpointError(ValueError):
    pass


def fingerprint(cands: CandidateAtomSet) -> str:
    text = "\n".join(str(l) for l in cands.literals)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dumps(units: dict[str, DNFUnit], candidates: dict[str, CandidateAtomSet],
          meta: dict[str, str] | None = None) -> str:
    lines = [HEADER]
    for k, v in (meta or {}).items():
        if "\n" in f"{k}{v}" or "=" in k:
            raise CheckpointError(f"bad meta entry {k!r}")
        lines.append(f"meta {k}={v}")
    for name, u in units.items():
        lines.append(f"target {name} {u.rule_count} {u.atom_count} {fingerprint(candidates[name])}")
        lines += [f"w {_fmt(row)}" for row in u.conj_w]
        lines.append(f"d {_fmt(u.disj_w)}")
    return "\n".join(lines) + "\n"


def write_checkpoint(units, path, candidates, meta=None):
    path = Path(path)
    if not path.parent.is_dir():
        raise CheckpointError(f"directory {path.parent} does not exist")
    path.write_text(dumps(units, candidates, meta))


def loads(text: str, candidates: dict[str, CandidateAtomSet] | None = None,
          forced: dict[str, np.ndarray] | None = None) -> tuple[dict[str, DNFUnit], dict[str, str]]:
    """Parse a checkpoint; with ``candidates`` given, fingerprints must match."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0].strip() != HEADER:
        raise CheckpointError(f"not a checkpoint: expected header {HEADER!r}")
    meta: dict[str, str] = {}
    units: dict[str, DNFUnit] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "meta":
            k, _, v = lines[i][5:].partition("=")
            meta[k.strip()] = v.strip()
            i += 1
            continue
        if parts[0] != "target" or len(parts) != 5:
            raise CheckpointError(f"line {i + 1}: expected 'target <name> <rules> <atoms> <fingerprint>'")
        name, r, a, fp = parts[1], int(parts[2]), int(parts[3]), parts[4]
        if candidates is not None:
            if name not in candidates:
                raise CheckpointError(f"checkpoint target {name!r} is not a target of the program")
            if fingerprint(candidates[name]) != fp:
                raise CheckpointError(f"fingerprint mismatch for {name!r}: candidate atoms differ from the checkpoint")
        if i + r + 1 >= len(lines):
            raise CheckpointError(f"target {name!r}: checkpoint ends before its {r + 1} weight rows")
        rows = []
        for k in range(r):
            row = lines[i + 1 + k].split()
            if row[0] != "w" or len(row) != a + 1:
                raise CheckpointError(f"line {i + 2 + k}: expected {a} conjunction weights")
            rows.append([float(x) for x in row[1:]])
        d = lines[i + 1 + r].split()
        if d[0] != "d" or len(d) != r + 1:
            raise CheckpointError(f"line {i + 2 + r}: expected {r} disjunction weights")
        mask = forced[name] if forced and name in forced else np.zeros(a, dtype=bool)
        units[name] = DNFUnit(np.array(rows, dtype=np.float64).reshape(r, a),
                              np.array([float(x) for x in d[1:]]), mask)
        i += r + 2
    if candidates is not None:
        missing = set(candidates) - set(units)
        if missing:
            raise CheckpointError(f"checkpoint lacks targets: {', '.join(sorted(missing))}")
    return units, meta


def read_checkpoint(path, candidates=None, forced=None):
    return loads(Path(path).read_text(), candidates, forced)
