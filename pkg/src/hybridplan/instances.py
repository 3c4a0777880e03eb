"""Seeded random maps, solvable start/goal draws, and expert paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridworld import MOVES, Cell, GridMap, Scenario, step
from .planners.search import bfs_distances


class ExhaustedRetries(RuntimeError):
    pass


@dataclass(frozen=True)
class Instance:
    map: GridMap
    start: Cell
    goal: Cell
    name: str = ""


def random_map(rng: np.random.Generator, width: int, height: int, density: float) -> GridMap:
    """Each cell blocked independently with probability ``density``."""
    if not 0.0 <= density <= 0.45:
        raise ValueError("obstacle density must lie in [0, 0.45]")
    for _ in range(1000):
        free = rng.random((height, width)) >= density
        if free.sum() >= 2:
            return GridMap(width, height, free)
    raise ExhaustedRetries("could not draw a map with two free cells")


def random_instance(rng: np.random.Generator, width: int, height: int, density: float,
                    tries: int = 1000, name: str = "") -> Instance:
    """Draw map, start and goal until the goal is reachable and distinct from the start."""
    for _ in range(tries):
        m = random_map(rng, width, height, density)
        cells = m.passable_cells()
        i, j = rng.choice(len(cells), size=2, replace=False)
        s, g = cells[i], cells[j]
        if bfs_distances(m, s)[g.y, g.x] > 0:
            return Instance(m, s, g, name)
    raise ExhaustedRetries(f"no connected instance in {tries} tries")


def random_scenario(rng: np.random.Generator, m: GridMap, n_agents: int, tries: int = 1000) -> Scenario:
    """Distinct starts and distinct goals, each goal reachable from its start."""
    cells = m.passable_cells()
    if len(cells) < 2 * n_agents:
        raise ExhaustedRetries("map too small for the requested agent count")
    for _ in range(tries):
        pick = rng.choice(len(cells), size=2 * n_agents, replace=False)
        starts = [cells[k] for k in pick[:n_agents]]
        goals = [cells[k] for k in pick[n_agents:]]
        dists = [bfs_distances(m, s)[g.y, g.x] for s, g in zip(starts, goals)]
        if all(d > 0 for d in dists):
            return Scenario(tuple(zip(starts, goals)), tuple(float(d) for d in dists))
    raise ExhaustedRetries(f"no solvable {n_agents}-agent scenario in {tries} tries")


def expert_path(m: GridMap, start: Cell, goal: Cell, rng: np.random.Generator | None = None) -> list[Cell]:
    """A shortest path by descent on the exact distance-to-goal field.

    Without ``rng`` the first improving move in the order Left, Right, Up,
    Down is taken (horizontal first), which gives a consistent shape that is
    easy to imitate. With ``rng`` a uniformly random improving move is taken.
    """
    dist = bfs_distances(m, goal)
    if dist[start.y, start.x] < 0:
        raise ValueError(f"{goal} unreachable from {start}")
    order = (MOVES[2], MOVES[3], MOVES[0], MOVES[1])
    path = [start]
    c = start
    while c != goal:
        here = dist[c.y, c.x]
        options = []
        for a in order:
            n = step(c, a)
            if m.is_passable(n) and dist[n.y, n.x] == here - 1:
                options.append(n)
        c = options[0] if rng is None else options[int(rng.integers(len(options)))]
        path.append(c)
    return path
