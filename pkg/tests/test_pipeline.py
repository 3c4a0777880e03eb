import numpy as np
import pytest

from hybridplan.gridworld import Cell, GridMap, validate_path
from hybridplan.instances import random_instance
from hybridplan.planners import (
    ASTAR_FALLBACK,
    CostField,
    Models,
    NoPath,
    PipelineConfig,
    all_configs,
    astar,
    hybrid_plan,
    replan,
)
from hybridplan.planners.search import path_cost


def test_all_configs_are_sixteen_and_distinct():
    cfgs = all_configs()
    assert len(cfgs) == 16 and len(set(cfgs)) == 16


def test_config_validation():
    for kw in (dict(fallback="pray"), dict(candidates=0), dict(lam=-1.0)):
        with pytest.raises(ValueError):
            PipelineConfig(**kw)


def test_missing_models_rejected():
    with pytest.raises(ValueError, match="gcn"):
        hybrid_plan(GridMap.open(3, 3), Cell(0, 0), Cell(2, 2), Models(), PipelineConfig(use_gan=True))


def test_all_stages_off_is_astar():
    m = GridMap.from_rows(["....", ".@@.", "...."])
    r = hybrid_plan(m, Cell(0, 0), Cell(3, 2), None, PipelineConfig())
    assert r.provenance == ASTAR_FALLBACK
    assert r.path == astar(CostField.uniform(m), m, Cell(0, 0), Cell(3, 2))


def test_untrained_models_still_yield_valid_paths(untrained_models):
    rng = np.random.default_rng(11)
    for _ in range(4):
        inst = random_instance(rng, 6, 6, 0.2)
        for cfg in all_configs(candidates=3):
            r = hybrid_plan(inst.map, inst.start, inst.goal, untrained_models, cfg)
            assert validate_path(inst.map, r.path, inst.start, inst.goal), cfg.name


def test_lambda_zero_matches_astar_cost(untrained_models):
    rng = np.random.default_rng(12)
    cfg = PipelineConfig(use_gnn=True, lam=0.0)
    for _ in range(10):
        inst = random_instance(rng, 8, 8, 0.2)
        r = hybrid_plan(inst.map, inst.start, inst.goal, untrained_models, cfg)
        u = CostField.uniform(inst.map)
        assert path_cost(u, r.path) == path_cost(u, astar(u, inst.map, inst.start, inst.goal))


def test_unreachable_goal_raises():
    m = GridMap.from_rows([".@.", ".@.", ".@."])
    with pytest.raises(NoPath):
        hybrid_plan(m, Cell(0, 0), Cell(2, 0), None, PipelineConfig())


def test_replan_routes_around_new_wall():
    m = GridMap.open(5, 3)
    first = hybrid_plan(m, Cell(0, 1), Cell(4, 1), None, PipelineConfig()).path
    walled = GridMap.from_rows([".....", "..@..", "....."])
    r = replan(walled, first[1], Cell(4, 1), None, PipelineConfig())
    assert validate_path(walled, r.path, first[1], Cell(4, 1))
    assert Cell(2, 1) not in r.path


def test_replan_goal_walled_off():
    walled = GridMap.from_rows(["...@.", "...@.", "...@."])
    with pytest.raises(NoPath):
        replan(walled, Cell(1, 1), Cell(4, 1), None, PipelineConfig())
    with pytest.raises(ValueError):
        replan(walled, Cell(3, 1), Cell(4, 1), None, PipelineConfig())


def test_full_pipeline_near_optimal(trained_models):
    m = GridMap.open(8, 8)
    rng = np.random.default_rng(13)
    cells = m.passable_cells()
    cfg = PipelineConfig(True, True, True)
    for _ in range(20):
        i, j = rng.choice(len(cells), 2, replace=False)
        s, g = cells[i], cells[j]
        r = hybrid_plan(m, s, g, trained_models, cfg)
        assert validate_path(m, r.path, s, g)
        opt = abs(s.x - g.x) + abs(s.y - g.y)
        assert len(r.path) - 1 <= 1.2 * opt
