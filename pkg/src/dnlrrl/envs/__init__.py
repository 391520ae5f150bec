"""Symbolic environments with predicate-grounding observations."""
from .boxworld import BoxWorld, BoxWorldState
from .gridworld import GridWorld, GridWorldState


def make_env(kind: str, **params):
    if kind == "boxworld":
        return BoxWorld(**params)
    if kind == "gridworld":
        return GridWorld(**params)
    raise ValueError(f"unknown environment kind {kind!r}")


__all__ = ["BoxWorld", "BoxWorldState", "GridWorld", "GridWorldState", "make_env"]
