"""Prioritized multi-agent planning over a space-time reservation table.

Agents are planned in priority order. Each finished agent reserves the cells
it occupies at every timestep, the edges it traverses (to rule out swaps),
and its goal cell from its arrival time onwards (it parks there).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..gridworld import Cell, GridMap, Scenario, neighbors, position_at, simulate_joint
from .search import manhattan


class NoJointPlan(RuntimeError):
    def __init__(self, agent: int, message: str = ""):
        super().__init__(message or f"agent {agent} cannot reach its goal under the reservations")
        self.agent = agent


@dataclass
class ReservationTable:
    vertices: set[tuple[Cell, int]] = field(default_factory=set)
    edges: set[tuple[Cell, Cell, int]] = field(default_factory=set)  # (a, b, t): a -> b between t and t + 1
    parked: dict[Cell, int] = field(default_factory=dict)  # cell -> first timestep of permanent occupation
    last_use: dict[Cell, int] = field(default_factory=dict)  # latest reserved timestep per cell

    def blocked(self, c: Cell, t: int) -> bool:
        if (c, t) in self.vertices:
            return True
        p = self.parked.get(c)
        return p is not None and t >= p

    def move_blocked(self, a: Cell, b: Cell, t: int) -> bool:
        """Moving a -> b between t and t + 1 would swap with a reserved b -> a."""
        return (b, a, t) in self.edges

    def can_park(self, c: Cell, t: int) -> bool:
        """Nobody else needs ``c`` at or after ``t``."""
        return c not in self.parked and self.last_use.get(c, -1) < t

    def admits(self, path: list[Cell]) -> bool:
        for t, c in enumerate(path):
            if self.blocked(c, t):
                return False
            if t + 1 < len(path) and self.move_blocked(c, path[t + 1], t):
                return False
        return self.can_park(path[-1], len(path) - 1)

    def reserve(self, path: list[Cell]) -> None:
        for t, c in enumerate(path):
            self.vertices.add((c, t))
            self.last_use[c] = max(self.last_use.get(c, -1), t)
            if t + 1 < len(path) and path[t + 1] != c:
                self.edges.add((c, path[t + 1], t))
        self.parked[path[-1]] = len(path) - 1


def space_time_astar(m: GridMap, start: Cell, goal: Cell, table: ReservationTable, horizon: int) -> list[Cell] | None:
    """Shortest timed path (moves and waits cost 1) avoiding the reservations, or None."""
    if table.blocked(start, 0):
        return None
    h0 = manhattan(start, goal)
    heap = [(h0, h0, 0, start.y, start.x)]
    parent: dict[tuple[Cell, int], tuple[Cell, int]] = {}
    seen = {(start, 0)}
    while heap:
        _, _, t, y, x = heapq.heappop(heap)
        c = Cell(x, y)
        if c == goal and table.can_park(c, t):
            out = [c]
            key = (c, t)
            while key in parent:
                key = parent[key]
                out.append(key[0])
            out.reverse()
            return out
        if t >= horizon:
            continue
        for n in [c] + neighbors(m, c):
            nt = t + 1
            if (n, nt) in seen or table.blocked(n, nt) or table.move_blocked(c, n, t):
                continue
            seen.add((n, nt))
            parent[(n, nt)] = (c, t)
            hn = manhattan(n, goal)
            heapq.heappush(heap, (nt + hn, hn, nt, n.y, n.x))
    return None


def _plan_in_order(m: GridMap, scenario: Scenario, order: list[int], solo: dict, horizon: int) -> list[list[Cell]]:
    table = ReservationTable()
    paths: dict[int, list[Cell]] = {}
    for i in order:
        s, g = scenario.agents[i]
        path = solo.get(i)
        if path is not None and not table.admits(path):
            path = None
        if path is None:
            path = space_time_astar(m, s, g, table, horizon)
        if path is None:
            raise NoJointPlan(i)
        table.reserve(path)
        paths[i] = path
    out = [paths[i] for i in range(len(order))]
    # later agents' starts are not reserved while earlier agents plan, so check
    report = simulate_joint(m, out)
    if not report.ok:
        c = (report.vertex_conflicts or report.swap_conflicts)[0]
        late = max(c.agent_i, c.agent_j, key=order.index)
        raise NoJointPlan(late, f"agents {c.agent_i} and {c.agent_j} conflict at t={c.time}")
    return out


def prioritized_multi(m: GridMap, scenario: Scenario, config=None, models=None,
                      horizon: int | None = None) -> list[list[Cell]]:
    """Conflict-free joint plan, one timed path per agent, in scenario order.

    Agents plan in index order first. With a pipeline ``config`` each agent
    tries its solo :func:`hybrid_plan` path; if that path clashes with
    earlier agents it is replaced by a space-time A* path. Without a config
    space-time A* is used directly.

    An agent that cannot be placed (say its goal is walled in by agents
    parked earlier) moves to the front of the order and planning restarts,
    at most once per agent.
    """
    scenario.validate(m)
    horizon = 4 * (m.width + m.height) if horizon is None else horizon
    solo: dict[int, list[Cell]] = {}
    if config is not None:
        from .pipeline import hybrid_plan

        solo = {i: hybrid_plan(m, s, g, models, config).path for i, (s, g) in enumerate(scenario.agents)}
    order = list(range(len(scenario.agents)))
    tried = set()
    while True:
        tried.add(tuple(order))
        try:
            return _plan_in_order(m, scenario, order, solo, horizon)
        except NoJointPlan as e:
            nxt = [e.agent] + [i for i in order if i != e.agent]
            if len(tried) > len(order) or tuple(nxt) in tried:
                raise
            order = nxt


def joint_positions(paths: list[list[Cell]]) -> list[list[Cell]]:
    """Per-timestep agent positions, padded with waits to the longest path."""
    steps = max(len(p) for p in paths)
    return [[position_at(p, t) for p in paths] for t in range(steps)]
