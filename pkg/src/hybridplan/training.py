"""Training loops for the three learned stages, shared by the CLI, tests and demos."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gcn_encoder import GcnParams, gcn_train_step, path_membership
from .graph_env import build_graph
from .gridworld import Cell, GridMap, Scenario
from .instances import Instance, expert_path, random_instance
from .path_gan import GanConfig, GanExample, GanModel, train_gan
from .planners.search import bfs_distances
from .tensor_core.optim import Adam
from .transformer_planner import PlannerConfig, TransformerParams, tokenize_env, train_step

StepHook = Callable[[int, float], None]


class Diverged(FloatingPointError):
    """Training loss became NaN or infinite."""


def _check(loss: float, step: int) -> None:
    if not math.isfinite(loss):
        raise Diverged(f"loss is {loss} at step {step}")


def dihedral(m: GridMap, k: int) -> GridMap:
    """One of the 8 symmetries of the square: optional transpose, then k % 4 quarter turns."""
    a = m.passable
    if k & 4:
        a = a.T
    a = np.rot90(a, k & 3)
    return GridMap(a.shape[1], a.shape[0], np.ascontiguousarray(a))


def draw_pair(rng: np.random.Generator, m: GridMap) -> tuple[Cell, Cell]:
    """Distinct start and goal in one connected component."""
    cells = m.passable_cells()
    while True:
        i, j = rng.choice(len(cells), 2, replace=False)
        s, g = cells[i], cells[j]
        if bfs_distances(m, s)[g.y, g.x] > 0:
            return s, g


# ----------------------------------------------------------------------------
# transformer


@dataclass
class TransformerTraining:
    n_maps: int = 500
    width: int = 8
    height: int = 8
    density: float = 0.10
    epochs: int = 90
    batch: int = 32
    lr: float = 1e-3
    final_lr: float = 5e-5
    augment: bool = True


def transformer_maps(seed: int, recipe: TransformerTraining) -> tuple[np.random.Generator, list[GridMap]]:
    rng = np.random.default_rng(seed)
    return rng, [random_instance(rng, recipe.width, recipe.height, recipe.density).map for _ in range(recipe.n_maps)]


def train_transformer(recipe: TransformerTraining = TransformerTraining(), seed: int = 0,
                      config: PlannerConfig | None = None, maps: Sequence[GridMap] | None = None,
                      on_step: StepHook | None = None) -> TransformerParams:
    """Imitation of shortest paths by teacher forcing.

    Every epoch draws a fresh start/goal pair on each map and, with
    ``augment``, a random dihedral transform of the map, so the model sees
    new instances on the same map pool. The learning rate decays
    exponentially from ``lr`` to ``final_lr`` over the epochs.
    """
    rng, pool = transformer_maps(seed, recipe)
    if maps is not None:
        pool = list(maps)
    params = TransformerParams.init(config or PlannerConfig(), seed=seed)
    decay = (recipe.final_lr / recipe.lr) ** (1.0 / max(recipe.epochs, 1))
    adam = Adam(params.parameters(), lr=recipe.lr, decay=decay)
    fixed = [(m, *draw_pair(rng, m)) for m in pool]
    step = 0
    t0 = time.perf_counter()
    for _ in range(recipe.epochs):
        examples = []
        for k, m in enumerate(pool):
            if recipe.augment:
                mm = dihedral(m, int(rng.integers(8)))
                s, g = draw_pair(rng, mm)
            else:
                mm, s, g = fixed[k]
            examples.append((tokenize_env(mm, s, g), expert_path(mm, s, g)))
        for k in range(0, len(examples), recipe.batch):
            loss = train_step(examples[k : k + recipe.batch], params, adam)
            _check(loss, step)
            params.loss_curve.append(loss)
            if on_step is not None:
                on_step(step, loss)
            step += 1
        adam.decay_lr()
    params.training_time += time.perf_counter() - t0
    return params


# ----------------------------------------------------------------------------
# gcn


def train_gcn(instances: Sequence[Instance], epochs: int = 20, lr: float = 1e-2, seed: int = 0,
              params: GcnParams | None = None, on_step: StepHook | None = None) -> GcnParams:
    """Fit node scores to 0/1 membership of the expert path, one graph per step."""
    params = params or GcnParams.init(seed)
    graphs = []
    for inst in instances:
        g = build_graph(inst.map, Scenario(((inst.start, inst.goal),)))
        graphs.append((g, path_membership(g, expert_path(inst.map, inst.start, inst.goal))))
    adam = Adam(params.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    step = 0
    t0 = time.perf_counter()
    for _ in range(epochs):
        for k in rng.permutation(len(graphs)):
            loss = gcn_train_step(*graphs[k], params, adam)
            _check(loss, step)
            params.loss_curve.append(loss)
            if on_step is not None:
                on_step(step, loss)
            step += 1
    params.training_time += time.perf_counter() - t0
    return params


# ----------------------------------------------------------------------------
# gan


def gan_examples(instances: Sequence[Instance], rng: np.random.Generator, paths_per: int = 6) -> list[GanExample]:
    """Each instance with several shortest paths picked by random tie-breaking."""
    return [GanExample(i.map, i.start, i.goal, [expert_path(i.map, i.start, i.goal, rng) for _ in range(paths_per)])
            for i in instances]


def empty_map_instances(rng: np.random.Generator, n: int, width: int = 8, height: int = 8) -> list[Instance]:
    m = GridMap.open(width, height)
    cells = m.passable_cells()
    out = []
    for _ in range(n):
        i, j = rng.choice(len(cells), 2, replace=False)
        out.append(Instance(m, cells[i], cells[j]))
    return out


def train_path_gan(instances: Sequence[Instance], gcn: GcnParams, config: GanConfig | None = None, seed: int = 0,
                   iterations: int | None = None, on_step: StepHook | None = None) -> GanModel:
    config = config or GanConfig()
    rng = np.random.default_rng(seed)
    examples = gan_examples(instances, rng)

    def hook(it, d, g):
        _check(d, it)
        _check(g, it)
        if on_step is not None:
            on_step(it, g)

    return train_gan(examples, gcn, config, seed=seed, iterations=iterations, on_step=hook)
