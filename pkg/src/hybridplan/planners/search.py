"""Single-agent optimal search on per-cell cost fields.

Entering a cell costs ``field[y, x]`` (>= 1). Frontier ties are broken
lexicographically by (y, x) after the primary keys, so every run is
deterministic.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..gridworld import Cell, GridMap, neighbors


class NoPath(RuntimeError):
    pass


@dataclass(frozen=True)
class CostField:
    costs: np.ndarray  # (height, width); entries on blocked cells are ignored

    def __post_init__(self):
        arr = np.asarray(self.costs, dtype=np.float64).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "costs", arr)

    @classmethod
    def uniform(cls, m: GridMap) -> "CostField":
        return cls(np.ones((m.height, m.width)))

    def check(self, m: GridMap) -> None:
        if self.costs.shape != (m.height, m.width):
            raise ValueError(f"cost field shape {self.costs.shape} != map {(m.height, m.width)}")
        if np.any(self.costs[m.passable] < 1.0):
            raise ValueError("cost field below the floor of 1")

    def __getitem__(self, c: Cell) -> float:
        return float(self.costs[c.y, c.x])


@dataclass
class SearchResult:
    path: list[Cell]
    cost: float
    expansions: int


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


def path_cost(field: CostField, path: list[Cell]) -> float:
    return float(sum(field[c] for c in path[1:]))


def _reconstruct(parent: dict[Cell, Cell], goal: Cell) -> list[Cell]:
    out = [goal]
    while out[-1] in parent:
        out.append(parent[out[-1]])
    out.reverse()
    return out


def _best_first(field: CostField, m: GridMap, start: Cell, goal: Cell, use_h: bool) -> SearchResult:
    if not (m.is_passable(start) and m.is_passable(goal)):
        raise NoPath(f"start {start} or goal {goal} is not passable")
    field.check(m)
    costs = field.costs
    g = {start: 0.0}
    parent: dict[Cell, Cell] = {}
    closed: set[Cell] = set()
    h0 = manhattan(start, goal) if use_h else 0
    heap = [(h0, h0, start.y, start.x)]
    expansions = 0
    while heap:
        _, h, y, x = heapq.heappop(heap)
        c = Cell(x, y)
        if c in closed:
            continue
        closed.add(c)
        expansions += 1
        if c == goal:
            return SearchResult(_reconstruct(parent, goal), g[c], expansions)
        gc = g[c]
        for n in neighbors(m, c):
            if n in closed:
                continue
            ng = gc + costs[n.y, n.x]
            if ng < g.get(n, np.inf):
                g[n] = ng
                parent[n] = c
                hn = manhattan(n, goal) if use_h else 0
                heapq.heappush(heap, (ng + hn, hn, n.y, n.x))
    raise NoPath(f"{goal} unreachable from {start}")


def dijkstra_search(field: CostField, m: GridMap, start: Cell, goal: Cell) -> SearchResult:
    return _best_first(field, m, start, goal, use_h=False)


def astar_search(field: CostField, m: GridMap, start: Cell, goal: Cell) -> SearchResult:
    return _best_first(field, m, start, goal, use_h=True)


def dijkstra(field: CostField, m: GridMap, start: Cell, goal: Cell) -> list[Cell]:
    return dijkstra_search(field, m, start, goal).path


def astar(field: CostField, m: GridMap, start: Cell, goal: Cell) -> list[Cell]:
    return astar_search(field, m, start, goal).path


def bfs_distances(m: GridMap, start: Cell) -> np.ndarray:
    """Unit-cost hop distances from ``start``; -1 where unreachable."""
    dist = np.full((m.height, m.width), -1, dtype=np.int64)
    if not m.is_passable(start):
        return dist
    dist[start.y, start.x] = 0
    q = deque([start])
    while q:
        c = q.popleft()
        for n in neighbors(m, c):
            if dist[n.y, n.x] < 0:
                dist[n.y, n.x] = dist[c.y, c.x] + 1
                q.append(n)
    return dist


def bfs_distance(m: GridMap, start: Cell, goal: Cell) -> int | None:
    d = int(bfs_distances(m, start)[goal.y, goal.x])
    return None if d < 0 else d
