import math

import numpy as np
import pytest

from hybridplan.gridworld import Cell, GridMap, validate_path
from hybridplan.instances import expert_path
from hybridplan.tensor_core import Adam, ShapeMismatch, Tensor
from hybridplan.transformer_planner import (
    BLOCKED,
    EOS,
    FREE,
    GOAL,
    SEP,
    START,
    PlannerConfig,
    TransformerParams,
    VocabOverflow,
    attention_weights,
    causal_mask,
    make_batch,
    plan,
    positional_encoding,
    scaled_dot_attention,
    tokenize_env,
    train_step,
)


def test_tokenize():
    m = GridMap.from_rows(["..@", "..."])
    tok = tokenize_env(m, Cell(0, 0), Cell(2, 1))
    assert list(tok.env) == [START, FREE, BLOCKED, FREE, FREE, GOAL, SEP]
    assert len(tok) == 7


def test_positional_encoding_values():
    pe = positional_encoding(10, 8)
    assert pe.shape == (10, 8)
    assert np.allclose(pe[0, 0::2], 0) and np.allclose(pe[0, 1::2], 1)
    assert pe[3, 2] == pytest.approx(math.sin(3 / 10000 ** (2 / 8)))
    assert pe[3, 3] == pytest.approx(math.cos(3 / 10000 ** (2 / 8)))


def test_attention_by_hand():
    Q = np.eye(2)
    K = np.eye(2)
    V = np.array([[1.0, 0.0], [0.0, 2.0]])
    w = attention_weights(Q, K)
    e = math.exp(1 / math.sqrt(2))
    assert np.allclose(w, [[e / (e + 1), 1 / (e + 1)], [1 / (e + 1), e / (e + 1)]])
    out = scaled_dot_attention(Tensor(Q), Tensor(K), Tensor(V), causal_mask(2)).data
    assert np.allclose(out[0], V[0])  # the first query only sees the first key
    with pytest.raises(ShapeMismatch):
        scaled_dot_attention(Tensor(Q), Tensor(np.ones((2, 3))), Tensor(V))


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(d_model=30, h=4)
    with pytest.raises(ValueError):
        PlannerConfig(d_model=6, h=3)


def test_param_count_closed_form():
    cfg = PlannerConfig()
    d, dff, L = cfg.d_model, cfg.d_ff, cfg.n_layers
    attn = 4 * d * d
    ff = d * dff + dff + dff * d + d
    enc = attn + ff + 2 * 2 * d
    dec = 2 * attn + ff + 3 * 2 * d
    expect = 5 * d + 8 * d + 9 * d * d + L * (enc + dec) + d * 8 + 8
    assert TransformerParams.init(cfg).n_params() == expect


def test_vocab_overflow():
    p = TransformerParams.init(PlannerConfig(d_model=8, h=2, n_layers=1, d_ff=8, max_len=10))
    with pytest.raises(VocabOverflow):
        plan(GridMap.open(4, 4), Cell(0, 0), Cell(3, 3), p)


def test_overfit_single_instance():
    m = GridMap.from_rows(["....", ".@@.", "...."])
    s, g = Cell(0, 0), Cell(3, 2)
    p = TransformerParams.init(PlannerConfig(d_model=32, h=2, n_layers=1, d_ff=64), seed=0)
    adam = Adam(p.parameters(), lr=3e-3)
    ex = [(tokenize_env(m, s, g), expert_path(m, s, g))]
    for _ in range(150):
        last = train_step(ex, p, adam)
    assert last < 0.05
    path = plan(m, s, g, p)
    assert path == expert_path(m, s, g)


def test_make_batch_padding():
    m = GridMap.open(3, 3)
    a = (tokenize_env(m, Cell(0, 0), Cell(2, 0)), expert_path(m, Cell(0, 0), Cell(2, 0)))
    b = (tokenize_env(m, Cell(0, 0), Cell(0, 1)), expert_path(m, Cell(0, 0), Cell(0, 1)))
    batch = make_batch([a, b])
    assert batch.dec_in.shape == (2, 3)
    assert list(batch.mask[1]) == [1, 1, 0]
    assert batch.targets[1, 1] == EOS


def test_checkpoint_roundtrip(tmp_path):
    p = TransformerParams.init(PlannerConfig(d_model=16, h=2, n_layers=1, d_ff=16), seed=3)
    p.save(tmp_path / "t.ckpt")
    q = TransformerParams.load(tmp_path / "t.ckpt")
    m = GridMap.open(4, 4)
    assert plan(m, Cell(0, 0), Cell(3, 3), p) == plan(m, Cell(0, 0), Cell(3, 3), q)


def test_trained_planner_mostly_valid(trained_transformer):
    m = GridMap.from_rows(["........", "..@.....", "..@..@..", ".....@..", "........", ".@@.....",
                           "........", "........"])
    path = plan(m, Cell(0, 0), Cell(7, 7), trained_transformer)
    assert validate_path(m, path, Cell(0, 0), Cell(7, 7))
