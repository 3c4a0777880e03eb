import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybridplan.gcn_encoder import GcnParams
from hybridplan.instances import random_instance
from hybridplan.path_gan import GanConfig
from hybridplan.planners import Models
from hybridplan.training import TransformerTraining, empty_map_instances, train_gcn, train_path_gan, train_transformer

# property tests: fixed seed, at least 100 cases each
settings.register_profile("seeded", max_examples=100, derandomize=True, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("seeded")


@pytest.fixture(scope="session")
def trained_transformer():
    """The desk-scale recipe: 500 seeded 8x8 maps, density 0.10."""
    t0 = time.perf_counter()
    params = train_transformer(TransformerTraining(), seed=0)
    params.wall_time = time.perf_counter() - t0
    return params


@pytest.fixture(scope="session")
def trained_gcn():
    rng = np.random.default_rng(0)
    return train_gcn([random_instance(rng, 8, 8, 0.10) for _ in range(200)], epochs=20, lr=1e-2, seed=0)


@pytest.fixture(scope="session")
def trained_gan(trained_gcn):
    rng = np.random.default_rng(0)
    cfg = GanConfig(lr=1e-3, batch=32, noise_dim=32, min_iterations=1800)
    return train_path_gan(empty_map_instances(rng, 400), trained_gcn, cfg, seed=0)


@pytest.fixture(scope="session")
def trained_models(trained_transformer, trained_gcn, trained_gan):
    return Models(trained_transformer, trained_gcn, trained_gan)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, trained_models):
    d = tmp_path_factory.mktemp("models")
    trained_models.transformer.save(d / "transformer.ckpt")
    trained_models.gcn.save(d / "gcn.ckpt")
    trained_models.gan.save(d / "gan.ckpt")
    return d


@pytest.fixture(scope="session")
def untrained_models():
    from hybridplan.path_gan import GanModel, condition_vector
    from hybridplan.gridworld import GridMap, Cell
    from hybridplan.transformer_planner import PlannerConfig, TransformerParams

    gcn = GcnParams.init(0)
    cond_dim = condition_vector(GridMap.open(4, 4), Cell(0, 0), Cell(1, 1), gcn).size
    return Models(TransformerParams.init(PlannerConfig(d_model=16, h=2, n_layers=1, d_ff=32), seed=0), gcn,
                  GanModel.init(GanConfig(hidden=16, emb=8, max_len=24), cond_dim, seed=0))
