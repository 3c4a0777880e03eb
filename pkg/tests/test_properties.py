"""Randomized structural invariants; the "seeded" hypothesis profile gives 100 derandomized cases each."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hybridplan.gcn_encoder import GcnParams, bias_costs, node_states, readout
from hybridplan.graph_env import EnvGraph, build_graph, normalized_adjacency_matrix
from hybridplan.gridworld import Cell
from hybridplan.instances import random_instance
from hybridplan.planners import CostField, astar_search, dijkstra_search
from hybridplan.planners.search import manhattan
from hybridplan.tensor_core import Tensor
from hybridplan.tensor_core import tensor as T
from hybridplan.transformer_planner import (
    PlannerConfig,
    TransformerParams,
    causal_mask,
    decoder_logits,
    scaled_dot_attention,
)

seeds = st.integers(0, 2**32 - 1)
TINY = TransformerParams.init(PlannerConfig(d_model=16, h=2, n_layers=1, d_ff=16), seed=0)
GCN = GcnParams.init(0)


@given(seeds, st.integers(1, 6), st.integers(1, 12), st.floats(0.01, 50.0))
def test_softmax_rows_normalized(seed, rows, cols, scale):
    x = np.random.default_rng(seed).normal(scale=scale, size=(rows, cols))
    p = T.softmax_rows(Tensor(x)).data
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@given(seeds, st.integers(2, 8), st.integers(0, 7))
def test_causal_attention_ignores_future(seed, n, cut):
    cut = cut % n
    rng = np.random.default_rng(seed)
    Q, K, V = (rng.normal(size=(n, 4)) for _ in range(3))
    K2, V2 = K.copy(), V.copy()
    K2[cut + 1:] += rng.normal(size=(n - cut - 1, 4))
    V2[cut + 1:] += rng.normal(size=(n - cut - 1, 4))
    a = scaled_dot_attention(Tensor(Q), Tensor(K), Tensor(V), causal_mask(n)).data
    b = scaled_dot_attention(Tensor(Q), Tensor(K2), Tensor(V2), causal_mask(n)).data
    assert np.allclose(a[:cut + 1], b[:cut + 1], atol=1e-12)


@given(seeds, st.integers(2, 7), st.integers(0, 6))
def test_decoder_prefix_invariant_to_future_tokens(seed, t, cut):
    cut = cut % t
    rng = np.random.default_rng(seed)
    n = 10
    memory = Tensor(rng.normal(size=(1, n, 16)))
    dec = rng.integers(0, TINY.config.act_vocab, size=(1, t))
    idx = rng.integers(0, n, size=(1, t, 9))
    dec2, idx2 = dec.copy(), idx.copy()
    dec2[0, cut + 1:] = rng.integers(0, TINY.config.act_vocab, size=t - cut - 1)
    idx2[0, cut + 1:] = rng.integers(0, n, size=(t - cut - 1, 9))
    a = decoder_logits(memory, dec, idx, TINY).data
    b = decoder_logits(memory, dec2, idx2, TINY).data
    assert np.allclose(a[0, :cut + 1], b[0, :cut + 1], atol=1e-10)


def _random_graph(rng):
    inst = random_instance(rng, int(rng.integers(2, 6)), int(rng.integers(2, 6)), 0.2)
    return build_graph(inst.map)


def _permuted(g: EnvGraph, perm):
    adj = np.zeros((g.n_nodes, g.n_nodes))
    for i, j, w in g.edges:
        adj[i, j] = adj[j, i] = w
    adj = adj[np.ix_(perm, perm)]
    return EnvGraph(tuple(g.nodes[k] for k in perm), (), g.features[perm], normalized_adjacency_matrix(adj))


@given(seeds)
def test_gcn_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng)
    perm = rng.permutation(g.n_nodes)
    h = node_states(g, GCN).data
    hp = node_states(_permuted(g, perm), GCN).data
    assert np.allclose(hp, h[perm], atol=1e-10)


@given(seeds, st.integers(1, 20))
def test_readout_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(n, GCN.layers[-1].shape[1]))
    perm = rng.permutation(n)
    assert np.allclose(readout(Tensor(H), GCN).data, readout(Tensor(H[perm]), GCN).data, atol=1e-12)


@given(seeds, st.floats(0.0, 10.0))
def test_cost_floor_keeps_manhattan_admissible(seed, lam):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 8, 8, 0.25)
    scores = rng.random(int(inst.map.passable.sum()))
    f = bias_costs(inst.map, scores, lam)
    assert f.costs[inst.map.passable].min() >= 1.0
    a = astar_search(f, inst.map, inst.start, inst.goal)
    d = dijkstra_search(f, inst.map, inst.start, inst.goal)
    assert a.cost == d.cost
    assert manhattan(inst.start, inst.goal) <= d.cost
