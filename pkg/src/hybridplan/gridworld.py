"""Grid maps, scenarios, actions, path validity and joint-plan conflicts.

Maps and scenarios use the movingai text formats. Coordinates are
``Cell(x, y)`` with ``x`` the column and ``y`` the row; ``y`` grows downward,
so ``Up`` decreases ``y``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

PASSABLE_GLYPHS = frozenset(".G")
BLOCKED_GLYPHS = frozenset("@TO")
# documented movingai glyphs we do not model; kept blocked
CONSERVATIVE_GLYPHS = frozenset("SW")


class MapFormatError(ValueError):
    pass


class MalformedHeader(MapFormatError):
    pass


class IllegalCharacter(MapFormatError):
    pass


class DimensionMismatch(MapFormatError):
    pass


class ScenarioError(ValueError):
    pass


class OutOfBounds(ScenarioError):
    pass


class StartOrGoalBlocked(ScenarioError):
    pass


class MalformedLine(ScenarioError):
    pass


class Cell(NamedTuple):
    x: int
    y: int


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]


_DELTAS = {
    Action.UP: (0, -1),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
    Action.WAIT: (0, 0),
}
# neighbour enumeration order
MOVES = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)


def step(c: Cell, a: Action) -> Cell:
    dx, dy = _DELTAS[a]
    return Cell(c.x + dx, c.y + dy)


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    passable: np.ndarray = field(repr=False)  # bool, shape (height, width)

    def __post_init__(self):
        arr = np.asarray(self.passable, dtype=bool)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("map dimensions must be positive")
        if arr.shape != (self.height, self.width):
            raise DimensionMismatch(f"cells shape {arr.shape} != ({self.height}, {self.width})")
        if not arr.any():
            raise ValueError("map has no passable cell")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "passable", arr)

    @classmethod
    def open(cls, width: int, height: int) -> "GridMap":
        return cls(width, height, np.ones((height, width), dtype=bool))

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> "GridMap":
        """Build from strings of '.' (free) and '@' (blocked); test convenience."""
        h, w = len(rows), len(rows[0])
        return cls(w, h, np.array([[ch == "." for ch in r] for r in rows], dtype=bool))

    def in_bounds(self, c: Cell) -> bool:
        return 0 <= c.x < self.width and 0 <= c.y < self.height

    def is_passable(self, c: Cell) -> bool:
        return self.in_bounds(c) and bool(self.passable[c.y, c.x])

    @property
    def cells(self) -> list[bool]:
        """Row-major passability flags, length width * height."""
        return self.passable.reshape(-1).tolist()

    def passable_cells(self) -> list[Cell]:
        ys, xs = np.nonzero(self.passable)
        return [Cell(int(x), int(y)) for y, x in zip(ys, xs)]

    def index(self, c: Cell) -> int:
        return c.y * self.width + c.x

    def with_blocked(self, cells: Sequence[Cell]) -> "GridMap":
        arr = self.passable.copy()
        for c in cells:
            arr[c.y, c.x] = False
        return GridMap(self.width, self.height, arr)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(
            self.passable, other.passable
        )

    def __hash__(self):
        return hash((self.width, self.height, self.passable.tobytes()))


@dataclass(frozen=True)
class Scenario:
    agents: tuple[tuple[Cell, Cell], ...]
    optimal_hint: tuple[float | None, ...] = ()
    map_name: str = ""

    def __post_init__(self):
        if not self.agents:
            raise ScenarioError("scenario has no agents")
        if not self.optimal_hint:
            object.__setattr__(self, "optimal_hint", (None,) * len(self.agents))

    @property
    def starts(self) -> list[Cell]:
        return [s for s, _ in self.agents]

    @property
    def goals(self) -> list[Cell]:
        return [g for _, g in self.agents]

    def validate(self, m: GridMap) -> None:
        for s, g in self.agents:
            for c in (s, g):
                if not m.in_bounds(c):
                    raise OutOfBounds(f"{c} outside {m.width}x{m.height}")
                if not m.is_passable(c):
                    raise StartOrGoalBlocked(f"{c} is blocked")


# ----------------------------------------------------------------------------
# movingai I/O


def parse_map(text: str) -> GridMap:
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 4:
        raise MalformedHeader("map header needs 4 lines")
    header = {}
    for ln in lines[:3]:
        parts = ln.split()
        if len(parts) != 2:
            raise MalformedHeader(f"bad header line {ln!r}")
        header[parts[0]] = parts[1]
    if lines[3].strip() != "map" or set(header) != {"type", "height", "width"}:
        raise MalformedHeader("expected 'type', 'height', 'width', 'map' header lines")
    try:
        h, w = int(header["height"]), int(header["width"])
    except ValueError as e:
        raise MalformedHeader(str(e)) from None
    if h <= 0 or w <= 0:
        raise MalformedHeader("non-positive dimensions")
    body = lines[4:]
    if len(body) != h:
        raise DimensionMismatch(f"header height {h}, body has {len(body)} rows")
    grid = np.zeros((h, w), dtype=bool)
    warned = False
    for y, row in enumerate(body):
        if len(row) != w:
            raise DimensionMismatch(f"row {y} has {len(row)} glyphs, expected {w}")
        for x, ch in enumerate(row):
            if ch in PASSABLE_GLYPHS:
                grid[y, x] = True
            elif ch in BLOCKED_GLYPHS:
                pass
            elif ch in CONSERVATIVE_GLYPHS:
                if not warned:
                    log.warning("glyph %r treated as blocked", ch)
                    warned = True
            else:
                raise IllegalCharacter(f"glyph {ch!r} at ({x}, {y})")
    return GridMap(w, h, grid)


def render_map(m: GridMap) -> str:
    rows = ["".join("." if p else "@" for p in row) for row in m.passable]
    return "\n".join(["type octile", f"height {m.height}", f"width {m.width}", "map", *rows]) + "\n"


def parse_scenario(text: str, m: GridMap) -> Scenario:
    lines = [ln.rstrip("\r") for ln in text.split("\n") if ln.strip()]
    if not lines or not lines[0].startswith("version"):
        raise MalformedLine("scenario must start with a 'version' line")
    agents, hints = [], []
    name = ""
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split("\t") if "\t" in ln else ln.split()
        if len(parts) != 9:
            raise MalformedLine(f"line {lineno}: expected 9 fields, got {len(parts)}")
        try:
            mw, mh = int(parts[2]), int(parts[3])
            sx, sy, gx, gy = (int(p) for p in parts[4:8])
            hint = float(parts[8])
        except ValueError as e:
            raise MalformedLine(f"line {lineno}: {e}") from None
        if (mw, mh) != (m.width, m.height):
            raise MalformedLine(f"line {lineno}: map size {mw}x{mh} != {m.width}x{m.height}")
        start, goal = Cell(sx, sy), Cell(gx, gy)
        for c in (start, goal):
            if not m.in_bounds(c):
                raise OutOfBounds(f"line {lineno}: {c} outside map")
            if not m.is_passable(c):
                raise StartOrGoalBlocked(f"line {lineno}: {c} is blocked")
        name = parts[1]
        agents.append((start, goal))
        hints.append(hint)
    return Scenario(tuple(agents), tuple(hints), name)


def render_scenario(sc: Scenario, m: GridMap, map_name: str = "", bucket: int = 0) -> str:
    name = map_name or sc.map_name or "map.map"
    out = ["version 1"]
    for (s, g), hint in zip(sc.agents, sc.optimal_hint):
        h = 0.0 if hint is None else hint
        out.append("\t".join(map(str, [bucket, name, m.width, m.height, s.x, s.y, g.x, g.y, f"{h:.8f}"])))
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------------
# paths


def neighbors(m: GridMap, c: Cell) -> list[Cell]:
    out = []
    for a in MOVES:
        n = step(c, a)
        if m.is_passable(n):
            out.append(n)
    return out


def actions_to_cells(start: Cell, actions: Sequence[Action]) -> list[Cell]:
    cells = [start]
    for a in actions:
        cells.append(step(cells[-1], Action(a)))
    return cells


def cells_to_actions(cells: Sequence[Cell]) -> list[Action]:
    inv = {d: a for a, d in _DELTAS.items()}
    out = []
    for a, b in zip(cells, cells[1:]):
        d = (b.x - a.x, b.y - a.y)
        if d not in inv:
            raise ValueError(f"{a} -> {b} is not a unit move")
        out.append(inv[d])
    return out


def validate_path(m: GridMap, path: Sequence[Cell], start: Cell, goal: Cell) -> bool:
    if not path or path[0] != start or path[-1] != goal:
        return False
    for c in path:
        if not m.is_passable(c):
            return False
    for a, b in zip(path, path[1:]):
        if abs(a.x - b.x) + abs(a.y - b.y) > 1:
            return False
    return True


# ----------------------------------------------------------------------------
# joint plans


class VertexConflict(NamedTuple):
    time: int
    cell: Cell
    agent_i: int
    agent_j: int


class SwapConflict(NamedTuple):
    time: int
    cell_a: Cell
    cell_b: Cell
    agent_i: int
    agent_j: int


@dataclass(frozen=True)
class ConflictReport:
    vertex_conflicts: tuple[VertexConflict, ...] = ()
    swap_conflicts: tuple[SwapConflict, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.vertex_conflicts and not self.swap_conflicts


def position_at(path: Sequence[Cell], t: int) -> Cell:
    return path[t] if t < len(path) else path[-1]


def simulate_joint(m: GridMap, paths: Sequence[Sequence[Cell]]) -> ConflictReport:
    """Enumerate vertex and swap conflicts, padding short paths with waits.

    A swap conflict at ``time`` t means agents i < j exchange ``cell_a`` and
    ``cell_b`` between t and t + 1 (agent i moves a -> b).
    """
    horizon = max((len(p) for p in paths), default=0)
    vertex, swap = [], []
    n = len(paths)
    for t in range(horizon):
        occupied: dict[Cell, int] = {}
        for i in range(n):
            c = position_at(paths[i], t)
            if c in occupied:
                # report each pair once, lower index first
                for j in range(i):
                    if position_at(paths[j], t) == c:
                        vertex.append(VertexConflict(t, c, j, i))
            else:
                occupied[c] = i
        if t + 1 >= horizon:
            continue
        moves = {}
        for i in range(n):
            a, b = position_at(paths[i], t), position_at(paths[i], t + 1)
            if a != b:
                moves[(a, b)] = i
        for (a, b), i in moves.items():
            j = moves.get((b, a))
            if j is not None and i < j:
                swap.append(SwapConflict(t, a, b, i, j))
    swap.sort()
    return ConflictReport(tuple(vertex), tuple(swap))
