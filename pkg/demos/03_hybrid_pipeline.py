"""
Training the three stages and planning with them
================================================

A reduced-budget tour: the GCN trains in a second, the Transformer gets a
few epochs on a few maps, and the GAN runs the minimum iteration count on
empty 8x8 rooms with a narrow network. Results are much weaker than the
full recipes in the test suite, which is the point: the pipeline still
returns a valid path because A* backs every stage.

Takes about a minute. Pass ``--full`` for the full recipes (~5 minutes).
"""

# %%
import argparse
import time

import numpy as np

from hybridplan.gridworld import Cell, GridMap, render_map
from hybridplan.instances import random_instance
from hybridplan.path_gan import GanConfig
from hybridplan.planners import Models, PipelineConfig, all_configs, hybrid_plan
from hybridplan.training import TransformerTraining, empty_map_instances, train_gcn, train_path_gan, \
    train_transformer

ap = argparse.ArgumentParser()
ap.add_argument("--full", action="store_true")
full = ap.parse_args().full

# %%
# GCN: node scores that light up along shortest paths.
rng = np.random.default_rng(0)
t0 = time.perf_counter()
gcn = train_gcn([random_instance(rng, 8, 8, 0.10) for _ in range(200)], epochs=20, seed=0)
print(f"gcn trained in {time.perf_counter() - t0:.1f}s, final loss {gcn.loss_curve[-1]:.4f}")

# %%
# Transformer: map tokens in, action tokens out.
recipe = TransformerTraining() if full else TransformerTraining(n_maps=60, epochs=8)
t0 = time.perf_counter()
transformer = train_transformer(recipe, seed=0)
print(f"transformer trained in {time.perf_counter() - t0:.1f}s, final loss {transformer.loss_curve[-1]:.4f}")

# %%
# GAN: recurrent generator and discriminator, conditioned on the GCN graph
# embedding and the start/goal coordinates.
gcfg = GanConfig() if full else GanConfig(hidden=16, emb=8)
t0 = time.perf_counter()
gan = train_path_gan(empty_map_instances(np.random.default_rng(0), 400), gcn, gcfg, seed=0)
print(f"gan trained in {time.perf_counter() - t0:.1f}s over {len(gan.g_losses)} iterations")
models = Models(transformer, gcn, gan)

# %%
# One query through every stage. Provenance says which stage won.
m = GridMap.from_rows(["........", "..@@@...", "......@.", ".@....@.", ".@..@...", "....@...",
                       "..@.....", "........"])
s, g = Cell(0, 0), Cell(7, 7)
res = hybrid_plan(m, s, g, models, PipelineConfig(True, True, True))
print("provenance", res.provenance, "steps", len(res.path) - 1, "candidates", res.n_candidates)
rows = [list(r) for r in render_map(m).splitlines()[4:]]
for c in res.path:
    rows[c.y][c.x] = "*"
print("\n".join("".join(r) for r in rows))

# %%
# All sixteen stage/fallback combinations return a valid path.
for cfg in all_configs():
    r = hybrid_plan(m, s, g, models, cfg)
    print(f"{cfg.name:22s} {cfg.fallback:7s} {r.provenance:15s} {len(r.path) - 1}")
