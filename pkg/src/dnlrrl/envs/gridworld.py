"""Symbolic key/lock GridWorld on a 12x12 grid.

Colors: 0 background, 1 agent, 2 gem, 3..9 keys and locks. A box is a
lock cell with its content cell immediately to its left. The agent picks
any cell per step (action ``row * 12 + col``):

* the loose key's cell picks the key up;
* a lock cell whose color matches the held key opens it (the agent moves
  onto the lock cell and keeps the key);
* an opened box's content cell takes the content, replacing the held key,
  or ends the episode with reward 1 if the content is the gem;
* anything else is a no-op.

With ``branch=True`` one extra box shares the lock color of a chain key
but holds a key that opens nothing, so taking it makes the episode
unwinnable.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

SIZE = 12
N_COLORS = 10
BACKGROUND, AGENT, GEM = 0, 1, 2
KEY_COLORS = tuple(range(3, N_COLORS))


@dataclass(frozen=True)
class Box:
    row: int
    col: int  # the lock column; content sits at col - 1
    lock: int
    content: int


@dataclass(frozen=True)
class GridWorldState:
    agent: tuple[int, int]
    held: int | None
    loose: tuple[int, int, int] | None  # (row, col, color) until picked up
    boxes: tuple[Box, ...]
    opened: frozenset[int] = frozenset()  # indices into boxes
    taken: frozenset[int] = frozenset()
    steps: int = 0
    chain: int = 2
    branch: int | None = None  # index of the dead-end box

    def grid(self) -> np.ndarray:
        g = np.zeros((SIZE, SIZE), dtype=np.int64)
        if self.loose is not None:
            r, c, k = self.loose
            g[r, c] = k
        for i, b in enumerate(self.boxes):
            if i not in self.opened:
                g[b.row, b.col] = b.lock
            if i not in self.taken:
                g[b.row, b.col - 1] = b.content
        g[self.agent] = AGENT
        return g

    def check(self):
        cells = [(b.row, b.col) for b in self.boxes] + [(b.row, b.col - 1) for b in self.boxes]
        if self.loose is not None:
            cells.append(self.loose[:2])
        if len(set(cells)) != len(cells):
            raise AssertionError("items overlap")
        if int(np.sum(self.grid() == AGENT)) != 1:
            raise AssertionError("expected exactly one agent cell")
        for i in self.taken:
            if i not in self.opened:
                raise AssertionError("content taken from a closed box")


class GridWorld:
    kind = "gridworld"
    action_predicate = "move"

    def __init__(self, chain: int = 2, branch: bool = False, max_steps: int = 50, max_tries: int = 1000):
        if chain not in (2, 3, 4):
            raise ValueError(f"gridworld chain length must be 2, 3 or 4, got {chain}")
        self.chain = chain
        self.branch = branch
        self.max_steps = max_steps
        self.max_tries = max_tries
        self.action_count = SIZE * SIZE

    @property
    def types(self) -> dict[str, tuple[str, ...]]:
        cells = tuple(str(i) for i in range(SIZE))
        return {"tv": cells, "th": cells, "tc": tuple(str(i) for i in range(N_COLORS))}

    @property
    def schema(self) -> dict[str, tuple[str, ...]]:
        return {"color": ("tv", "th", "tc"), "hasKey": ("tc",)}

    # -- reset --------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> GridWorldState:
        colors = [int(c) for c in rng.permutation(KEY_COLORS)]
        keys = colors[:self.chain + 1]
        # box i is opened by keys[i] and holds keys[i+1]; the last holds the gem
        specs = [(keys[i], keys[i + 1]) for i in range(self.chain)] + [(keys[self.chain], GEM)]
        branch_at = None
        if self.branch:
            shared = keys[int(rng.integers(1, self.chain + 1))]
            specs.append((shared, colors[self.chain + 1]))
            branch_at = len(specs) - 1
        for _ in range(self.max_tries):
            placed = self._place(rng, len(specs))
            if placed is None:
                continue
            (ar, ac), (kr, kc), spots = placed
            boxes = tuple(Box(r, c, lock, content) for (r, c), (lock, content) in zip(spots, specs))
            return GridWorldState((ar, ac), None, (kr, kc, keys[0]), boxes,
                                  chain=self.chain, branch=branch_at)
        raise RuntimeError("could not place gridworld items")

    def _place(self, rng, n_boxes):
        """Agent, loose key and boxes with a free cell between items in a row."""
        taken = np.zeros((SIZE, SIZE), dtype=bool)

        def free(r, c0, c1):
            lo, hi = max(c0 - 1, 0), min(c1 + 1, SIZE - 1)
            return not taken[r, lo:hi + 1].any()

        spots = []
        for _ in range(n_boxes):
            for _ in range(50):
                r, c = int(rng.integers(SIZE)), int(rng.integers(1, SIZE))
                if free(r, c - 1, c):
                    taken[r, c - 1:c + 1] = True
                    spots.append((r, c))
                    break
            else:
                return None
        singles = []
        for _ in range(2):
            for _ in range(50):
                r, c = int(rng.integers(SIZE)), int(rng.integers(SIZE))
                if free(r, c, c):
                    taken[r, c] = True
                    singles.append((r, c))
                    break
            else:
                return None
        return singles[0], singles[1], spots

    # -- dynamics -----------------------------------------------------
    def decode(self, action: int) -> tuple[int, int]:
        return divmod(self._check_action(action), SIZE)

    def _check_action(self, action: int) -> int:
        if not 0 <= action < self.action_count:
            raise IndexError(f"action {action} outside [0, {self.action_count})")
        return int(action)

    def step(self, s: GridWorldState, action: int):
        ns = self.transition(s, self._check_action(action))
        ns = _with_steps(ns, s.steps + 1)
        if self.solved(ns):
            return ns, 1.0, True
        return ns, 0.0, ns.steps >= self.max_steps

    def transition(self, s: GridWorldState, action: int) -> GridWorldState:
        r, c = divmod(action, SIZE)
        if s.loose is not None and (r, c) == s.loose[:2]:
            return _replace(s, agent=(r, c), held=s.loose[2], loose=None)
        for i, b in enumerate(s.boxes):
            if (r, c) == (b.row, b.col) and i not in s.opened and s.held == b.lock:
                return _replace(s, agent=(r, c), opened=s.opened | {i})
            if (r, c) == (b.row, b.col - 1) and i in s.opened and i not in s.taken:
                held = None if b.content == GEM else b.content
                return _replace(s, agent=(r, c), held=held, taken=s.taken | {i})
        return s

    def solved(self, s: GridWorldState) -> bool:
        return any(b.content == GEM and i in s.taken for i, b in enumerate(s.boxes))

    def useful_actions(self, s: GridWorldState) -> list[int]:
        """Actions that change the state."""
        out = []
        for a in self.item_cells(s):
            if self.transition(s, a) != s:
                out.append(a)
        return out

    def item_cells(self, s: GridWorldState) -> list[int]:
        cells = []
        if s.loose is not None:
            cells.append(s.loose[0] * SIZE + s.loose[1])
        for b in s.boxes:
            cells += [b.row * SIZE + b.col, b.row * SIZE + b.col - 1]
        return cells

    # -- groundings ---------------------------------------------------
    def groundings(self, s: GridWorldState) -> dict[str, np.ndarray]:
        color = np.zeros((SIZE, SIZE, N_COLORS))
        g = s.grid()
        color[np.arange(SIZE)[:, None], np.arange(SIZE)[None, :], g] = 1.0
        has = np.zeros(N_COLORS)
        if s.held is not None:
            has[s.held] = 1.0
        return {"color": color, "hasKey": has}

    def render(self, s: GridWorldState) -> str:
        chars = ".@*3456789"
        rows = ["".join(chars[v] for v in row) for row in s.grid()]
        return "\n".join(rows) + f"\nheld={s.held}"


def _replace(s: GridWorldState, **kw) -> GridWorldState:
    from dataclasses import replace
    return replace(s, **kw)


def _with_steps(s: GridWorldState, steps: int) -> GridWorldState:
    return _replace(s, steps=steps)


def solve(env: GridWorld, s: GridWorldState) -> list[int] | None:
    """Shortest action sequence reaching the gem (breadth-first), or None."""
    start = _replace(s, steps=0)
    parent = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if env.solved(cur):
            path = []
            while parent[cur] is not None:
                cur, a = parent[cur]
                path.append(a)
            return path[::-1]
        for a in env.useful_actions(cur):
            nxt = env.transition(cur, a)
            if nxt not in parent:
                parent[nxt] = (cur, a)
                queue.append(nxt)
    return None


def winnable(env: GridWorld, s: GridWorldState) -> bool:
    return solve(env, s) is not None
