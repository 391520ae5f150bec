"""Symbolic BoxWorld: stack ``n`` boxes on the blue box ``a``.

Columns are 0..n, heights 0..n with the floor at height 0. The action
``move(x, y)`` has index ``ix * (n + 1) + iy`` over the box constants
``a, b, ..., floor``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

FLOOR = "floor"


@dataclass(frozen=True)
class BoxWorldState:
    n: int
    position: tuple[tuple[int, int], ...]  # (h, v) per box, in constant order
    steps: int = 0

    @property
    def boxes(self) -> tuple[str, ...]:
        return tuple(string.ascii_lowercase[:self.n])

    def at(self, h: int, v: int) -> int | None:
        for i, pos in enumerate(self.position):
            if pos == (h, v):
                return i
        return None

    def covered(self, i: int) -> bool:
        h, v = self.position[i]
        return self.at(h, v + 1) is not None

    def on(self, i: int, j: int | None) -> bool:
        """Box i directly on box j (``None`` = floor)."""
        h, v = self.position[i]
        if j is None:
            return v == 1
        return self.position[j] == (h, v - 1)

    def check(self):
        if len(set(self.position)) != self.n:
            raise AssertionError("two boxes share a cell")
        for h, v in self.position:
            if not (0 <= h <= self.n and 1 <= v <= self.n):
                raise AssertionError(f"box outside grid at {(h, v)}")
            if v > 1 and self.at(h, v - 1) is None:
                raise AssertionError(f"unsupported box at {(h, v)}")


class BoxWorld:
    kind = "boxworld"

    def __init__(self, n: int = 4, max_steps: int = 20, goal: str = "stack"):
        if n not in (3, 4, 5):
            raise ValueError(f"boxworld supports n in {{3,4,5}}, got {n}")
        if goal not in ("stack", "alphabetical"):
            raise ValueError(f"unknown goal {goal!r}")
        self.n = n
        self.max_steps = max_steps
        self.goal = goal
        self.boxes = tuple(string.ascii_lowercase[:n])
        self.constants = self.boxes + (FLOOR,)
        self.action_count = (n + 1) ** 2

    # -- schema -------------------------------------------------------
    @property
    def types(self) -> dict[str, tuple[str, ...]]:
        return {"box": self.constants, "pos": tuple(str(i) for i in range(self.n + 1))}

    @property
    def schema(self) -> dict[str, tuple[str, ...]]:
        return {"posH": ("box", "pos"), "posV": ("box", "pos")}

    action_predicate = "move"

    # -- dynamics -----------------------------------------------------
    def reset(self, rng: np.random.Generator) -> BoxWorldState:
        cols = rng.permutation(self.n + 1)[:self.n]
        return BoxWorldState(self.n, tuple((int(c), 1) for c in cols))

    def decode(self, action: int) -> tuple[str, str]:
        if not 0 <= action < self.action_count:
            raise IndexError(f"action {action} outside [0, {self.action_count})")
        x, y = divmod(action, self.n + 1)
        return self.constants[x], self.constants[y]

    def encode(self, x: str, y: str) -> int:
        return self.constants.index(x) * (self.n + 1) + self.constants.index(y)

    def legal(self, s: BoxWorldState, action: int) -> bool:
        x, y = divmod(action, self.n + 1)
        if x == self.n or x == y or s.covered(x):
            return False
        if y == self.n:
            return not s.on(x, None)
        return not s.covered(y) and not s.on(x, y)

    def step(self, s: BoxWorldState, action: int):
        x, y = divmod(self._check_action(action), self.n + 1)
        pos = list(s.position)
        if self.legal(s, action):
            if y == self.n:
                used = {h for h, _ in pos if (h, 1) in pos}
                h = min(c for c in range(self.n + 1) if c not in used or pos[x] == (c, 1))
                pos[x] = (h, 1)
            else:
                hy, vy = pos[y]
                pos[x] = (hy, vy + 1)
        ns = BoxWorldState(s.n, tuple(pos), s.steps + 1)
        if self.solved(ns):
            return ns, 1.0, True
        return ns, 0.0, ns.steps >= self.max_steps

    def _check_action(self, action: int) -> int:
        if not 0 <= action < self.action_count:
            raise IndexError(f"action {action} outside [0, {self.action_count})")
        return int(action)

    def solved(self, s: BoxWorldState) -> bool:
        if s.position[0][1] != 1:
            return False
        if self.goal == "alphabetical":
            return all(s.on(i, i - 1) for i in range(1, s.n))
        h = s.position[0][0]
        return all(p[0] == h for p in s.position)

    # -- groundings ---------------------------------------------------
    def groundings(self, s: BoxWorldState) -> dict[str, np.ndarray]:
        k = self.n + 1
        pos_h = np.zeros((k, k))
        pos_v = np.zeros((k, k))
        for i, (h, v) in enumerate(s.position):
            pos_h[i, h] = 1.0
            pos_v[i, v] = 1.0
        pos_h[self.n, :] = 1.0  # the floor spans every column
        pos_v[self.n, 0] = 1.0
        return {"posH": pos_h, "posV": pos_v}

    def from_groundings(self, g: dict[str, np.ndarray], steps: int = 0) -> BoxWorldState:
        pos = tuple((int(np.argmax(g["posH"][i])), int(np.argmax(g["posV"][i]))) for i in range(self.n))
        return BoxWorldState(self.n, pos, steps)

    def render(self, s: BoxWorldState) -> str:
        rows = []
        for v in range(self.n, 0, -1):
            rows.append("".join(s.boxes[i] if (i := s.at(h, v)) is not None else "." for h in range(self.n + 1)))
        rows.append("=" * (self.n + 1))
        return "\n".join(rows)
