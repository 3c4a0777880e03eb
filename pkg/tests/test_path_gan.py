import math

import numpy as np
import pytest

from hybridplan.gcn_encoder import GcnParams
from hybridplan.gridworld import Action, Cell, GridMap, validate_path
from hybridplan.instances import expert_path
from hybridplan.path_gan import (
    EOS,
    AllRejected,
    Candidate,
    CandidateSet,
    GanConfig,
    GanModel,
    GanOptimizers,
    RealBatch,
    Reject,
    condition,
    discriminate,
    gan_train_step,
    generate,
    repair,
    select_best,
)
from hybridplan.path_gan import _gen_free_run
from hybridplan.planners import CostField, astar
from hybridplan.tensor_core import Tensor

M = GridMap.open(6, 6)
GCN = GcnParams.init(0)


def _cond(s=Cell(0, 0), g=Cell(3, 2), m=M):
    return condition(m, s, g, GCN)


def _model(zero_disc=False, **kw):
    cfg = GanConfig(hidden=16, emb=8, max_len=12, **kw)
    return GanModel.init(cfg, _cond().vector.size, seed=1, zero_disc=zero_disc)


def _real(rng, n=32):
    toks, conds, offs = [], [], []
    cells = M.passable_cells()
    for _ in range(n):
        i, j = rng.choice(len(cells), 2, replace=False)
        s, g = cells[i], cells[j]
        toks.append([int(a) + 1 for a in _actions(expert_path(M, s, g, rng))])
        c = _cond(s, g)
        conds.append(c.vector)
        offs.append(c.offset)
    return RealBatch(toks, np.array(conds), np.array(offs, dtype=float))


def _actions(path):
    from hybridplan.gridworld import cells_to_actions

    return cells_to_actions(path)


def test_config_bounds():
    GanConfig(noise_dim=10)
    GanConfig(noise_dim=100, batch=64)
    for kw in (dict(noise_dim=9), dict(noise_dim=101), dict(batch=16)):
        with pytest.raises(ValueError):
            GanConfig(**kw)
    assert GanConfig().lr == 0.001 and GanConfig().min_iterations == 1800


def test_generate_is_deterministic_and_bounded():
    model = _model()
    z = np.random.default_rng(0).standard_normal(32)
    a = generate(z, _cond(), model, max_len=7)
    assert a == generate(z, _cond(), model, max_len=7)
    assert len(a) <= 7
    with pytest.raises(ValueError):
        generate(np.zeros(5), _cond(), model)


def test_zero_discriminator_is_half_and_d_loss_ln2():
    model = _model(zero_disc=True)
    rng = np.random.default_rng(0)
    for toks in ([], [1, 2, 3], [4] * 10):
        assert discriminate(toks, _cond(), model) == 0.5
    opts = GanOptimizers.for_model(model)
    d, _ = gan_train_step(_real(rng), model, opts, rng, train_disc=False, train_gen=False)
    assert d == pytest.approx(math.log(2), abs=1e-12)


def test_discriminator_output_in_open_interval():
    model = _model()
    rng = np.random.default_rng(2)
    for _ in range(20):
        toks = list(rng.integers(1, 7, size=rng.integers(0, 12)))
        p = discriminate(toks, _cond(), model)
        assert 0.0 < p < 1.0


def test_discriminator_learns_with_frozen_generator():
    model = _model()
    opts = GanOptimizers.for_model(model)
    rng = np.random.default_rng(3)
    batch = _real(rng)
    losses = [gan_train_step(batch, model, opts, np.random.default_rng(3), train_gen=False)[0] for _ in range(100)]
    ups = sum(b >= a for a, b in zip(losses, losses[1:]))
    assert ups <= 5 and losses[-1] < losses[0]


def test_batchnorm_statistics_in_training_mode():
    model = _model()
    rng = np.random.default_rng(4)
    norm = model.gen.norm
    h = Tensor(rng.normal(2.0, 3.0, size=(32, 16)))
    out = norm(h, training=True, track=False).data
    assert np.abs(out.mean(axis=0)).max() < 1e-6
    assert np.abs(out.var(axis=0) - 1).max() < 1e-3
    # also on real hidden states of a rollout
    fake = _gen_free_run(model.gen, Tensor(rng.standard_normal((32, 32))), Tensor(_real(rng).conditions),
                         np.zeros((32, 2)), 3, 1.0, True)
    assert fake.shape == (32, 3, 8)


def test_repair_cases():
    m = GridMap.from_rows(["....", ".@@.", "...."])
    s, g = Cell(0, 0), Cell(3, 0)
    valid = [Action.RIGHT] * 3
    assert repair(m, valid, s, g) == [Cell(x, 0) for x in range(4)]
    wall = [Action.UP, Action.RIGHT]
    assert repair(m, wall, s, g) == astar(CostField.uniform(m), m, s, g)
    # partial progress then a wall: keep the prefix
    fixed = repair(m, [Action.DOWN, Action.RIGHT], s, Cell(3, 2))
    assert fixed[:2] == [Cell(0, 0), Cell(0, 1)] and validate_path(m, fixed, s, Cell(3, 2))
    sealed = GridMap.from_rows([".@.", ".@.", ".@."])
    with pytest.raises(Reject) as e:
        repair(sealed, [Action.DOWN, Action.RIGHT], Cell(0, 0), Cell(2, 0))
    assert e.value.truncated_at == 1


def _cand(n, score, ok=True):
    return Candidate([], score, ok, [Cell(i, 0) for i in range(n + 1)] if ok else None)


def test_select_best_rules():
    m = GridMap.open(8, 1)
    only = _cand(3, 0.1)
    assert select_best(CandidateSet([only]), m) is only
    short = _cand(4, 0.1)
    assert select_best(CandidateSet([_cand(6, 0.9), short]), m) is short
    hi = _cand(4, 0.8)
    assert select_best(CandidateSet([_cand(4, 0.3), hi]), m) is hi
    first = _cand(4, 0.5)
    assert select_best(CandidateSet([first, _cand(4, 0.5)]), m) is first
    with pytest.raises(AllRejected):
        select_best(CandidateSet([_cand(0, 0.5, ok=False)]), m)
    with pytest.raises(ValueError):
        CandidateSet([])


def test_checkpoint_roundtrip(tmp_path):
    model = _model()
    model.save(tmp_path / "g.ckpt")
    back = GanModel.load(tmp_path / "g.ckpt")
    assert back.config == model.config
    z = np.random.default_rng(1).standard_normal(32)
    assert generate(z, _cond(), back) == generate(z, _cond(), model)
    assert discriminate([1, 2, EOS], _cond(), back) == discriminate([1, 2, EOS], _cond(), model)


def test_trained_generator_is_diverse(trained_gan, trained_gcn):
    m = GridMap.open(8, 8)
    rng = np.random.default_rng(8)
    best = 0
    for s, g in ((Cell(0, 0), Cell(5, 5)), (Cell(1, 6), Cell(6, 1)), (Cell(7, 0), Cell(2, 4))):
        c = condition(m, s, g, trained_gcn)
        outs = {tuple(generate(rng.standard_normal(32), c, trained_gan)) for _ in range(16)}
        best = max(best, len(outs))
    assert best >= 2


def test_trained_discriminator_prefers_expert_paths(trained_gan, trained_gcn):
    m = GridMap.open(8, 8)
    rng = np.random.default_rng(9)
    cells = m.passable_cells()
    real, rand = [], []
    for _ in range(50):
        i, j = rng.choice(len(cells), 2, replace=False)
        s, g = cells[i], cells[j]
        c = condition(m, s, g, trained_gcn)
        toks = [int(a) + 1 for a in _actions(expert_path(m, s, g, rng))] + [EOS]
        real.append(discriminate(toks, c, trained_gan))
        rand.append(discriminate(list(rng.integers(1, 6, size=len(toks) - 1)) + [EOS], c, trained_gan))
    assert np.mean(real) > np.mean(rand)
