"""Environment graph over passable cells for the GCN encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .gridworld import Cell, GridMap, Scenario

N_FEATURES = 6
FEATURE_NAMES = ("passable", "cargo", "start_occupied", "goal", "x_frac", "y_frac")


class CargoError(ValueError):
    pass


@dataclass(frozen=True)
class EnvGraph:
    nodes: tuple[Cell, ...]
    edges: tuple[tuple[int, int, float], ...]  # i < j, one entry per undirected edge
    features: np.ndarray  # (N, 6)
    norm_adjacency: np.ndarray  # (N, N)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_index(self) -> dict[Cell, int]:
        return {c: i for i, c in enumerate(self.nodes)}

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        for i, j, w in self.edges:
            a[i, j] = a[j, i] = w
        return a


def parse_cargo(text: str, m: GridMap) -> dict[Cell, float]:
    """Lines of ``x y weight``; blank lines and '#' comments are skipped."""
    out: dict[Cell, float] = {}
    for lineno, ln in enumerate(text.splitlines(), start=1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise CargoError(f"line {lineno}: expected 'x y weight'")
        c = Cell(int(parts[0]), int(parts[1]))
        w = float(parts[2])
        if w < 0:
            raise CargoError(f"line {lineno}: negative cargo weight")
        if not m.is_passable(c):
            raise CargoError(f"line {lineno}: cargo on non-passable cell {c}")
        out[c] = w
    return out


def normalized_adjacency_matrix(adj: np.ndarray) -> np.ndarray:
    a = adj + np.eye(adj.shape[0])
    d = a.sum(axis=1)
    s = 1.0 / np.sqrt(d)
    return a * s[:, None] * s[None, :]


def normalized_adjacency(graph: EnvGraph) -> np.ndarray:
    return normalized_adjacency_matrix(graph.adjacency())


def build_graph(m: GridMap, scenario: Scenario | None = None,
                cargo: Mapping[Cell, float] | None = None) -> EnvGraph:
    nodes = tuple(m.passable_cells())  # row-major
    index = {c: i for i, c in enumerate(nodes)}
    edges = []
    for i, c in enumerate(nodes):
        # right and down neighbours give each undirected edge exactly once
        for n in (Cell(c.x + 1, c.y), Cell(c.x, c.y + 1)):
            j = index.get(n)
            if j is not None:
                edges.append((i, j, 1.0))
    feats = np.zeros((len(nodes), N_FEATURES))
    feats[:, 0] = 1.0
    for c, w in (cargo or {}).items():
        if c not in index:
            raise CargoError(f"cargo on non-passable cell {c}")
        feats[index[c], 1] = w
    if scenario is not None:
        for s, g in scenario.agents:
            feats[index[s], 2] = 1.0
            feats[index[g], 3] = 1.0
    for i, c in enumerate(nodes):
        feats[i, 4] = c.x / m.width
        feats[i, 5] = c.y / m.height
    adj = np.zeros((len(nodes), len(nodes)))
    for i, j, w in edges:
        adj[i, j] = adj[j, i] = w
    return EnvGraph(nodes, tuple(edges), feats, normalized_adjacency_matrix(adj))
