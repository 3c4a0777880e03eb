import numpy as np
import pytest

from hybridplan.gridworld import Cell, GridMap, validate_path
from hybridplan.instances import random_map
from hybridplan.planners import CostField, NoPath, astar, astar_search, bfs_distance, dijkstra, dijkstra_search
from hybridplan.planners.search import path_cost


def test_corridor_and_sealed_goal():
    m = GridMap.from_rows(["....."])
    assert dijkstra_search(CostField.uniform(m), m, Cell(0, 0), Cell(4, 0)).cost == 4
    sealed = GridMap.from_rows(["..@.", "..@.", "..@."])
    for fn in (dijkstra, astar):
        with pytest.raises(NoPath):
            fn(CostField.uniform(sealed), sealed, Cell(0, 0), Cell(3, 1))


def test_wall_gap_matches_bfs():
    m = GridMap.from_rows([".....", ".....", "@@.@@", ".....", "....."])
    r = dijkstra_search(CostField.uniform(m), m, Cell(0, 0), Cell(0, 4))
    assert r.cost == bfs_distance(m, Cell(0, 0), Cell(0, 4)) == 8


def test_open_corner_to_corner():
    m = GridMap.open(10, 10)
    assert astar_search(CostField.uniform(m), m, Cell(0, 0), Cell(9, 9)).cost == 18


def test_astar_matches_dijkstra_on_random_costs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        m = random_map(rng, 16, 16, 0.3)
        cells = m.passable_cells()
        s, g = (cells[k] for k in rng.choice(len(cells), 2, replace=False))
        field = CostField(1.0 + 3.0 * rng.random((16, 16)))
        try:
            d = dijkstra_search(field, m, s, g)
        except NoPath:
            with pytest.raises(NoPath):
                astar_search(field, m, s, g)
            continue
        a = astar_search(field, m, s, g)
        assert abs(a.cost - d.cost) < 1e-9
        assert a.expansions <= d.expansions
        assert validate_path(m, a.path, s, g)
        assert abs(path_cost(field, a.path) - a.cost) < 1e-9


def test_deterministic_tie_break():
    m = GridMap.open(5, 5)
    f = CostField.uniform(m)
    p1 = astar(f, m, Cell(0, 0), Cell(4, 4))
    assert p1 == astar(f, m, Cell(0, 0), Cell(4, 4))
    assert dijkstra(f, m, Cell(0, 0), Cell(4, 4)) == dijkstra(f, m, Cell(0, 0), Cell(4, 4))


def test_cost_floor_enforced():
    m = GridMap.open(3, 3)
    with pytest.raises(ValueError):
        astar(CostField(np.full((3, 3), 0.5)), m, Cell(0, 0), Cell(2, 2))
