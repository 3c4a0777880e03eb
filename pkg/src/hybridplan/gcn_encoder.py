"""Two-layer GCN that scores cells for path membership and summarises the map.

Scores feed :func:`bias_costs`, which turns them into a traversal cost field
with a floor of 1 so Manhattan distance stays an admissible heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph_env import N_FEATURES, EnvGraph
from .gridworld import GridMap
from .planners.search import CostField
from .tensor_core import tensor as T
from .tensor_core.checkpoint import load, save
from .tensor_core.losses import mse
from .tensor_core.optim import Adam, uniform_init
from .tensor_core.tensor import ShapeMismatch, Tape, Tensor, backward, no_grad

DEFAULT_LAMBDA = 0.5


class LengthMismatch(ValueError):
    pass


@dataclass
class GcnParams:
    layers: list[Tensor]
    readout_w: Tensor
    readout_b: Tensor
    head_w: Tensor
    head_b: Tensor
    training_time: float = 0.0
    loss_curve: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, seed: int = 0, widths: Sequence[int] = (N_FEATURES, 32, 32),
             zero_head: bool = False) -> "GcnParams":
        rng = np.random.default_rng(seed)
        layers = [Tensor(uniform_init(rng, a, b), requires_grad=True) for a, b in zip(widths, widths[1:])]
        d = widths[-1]
        head = np.zeros((2 * d, 1)) if zero_head else uniform_init(rng, 2 * d, 1)
        return cls(layers, Tensor(uniform_init(rng, d, d), requires_grad=True),
                   Tensor(np.zeros(d), requires_grad=True), Tensor(head, requires_grad=True),
                   Tensor(np.zeros(1), requires_grad=True))

    @property
    def embed_dim(self) -> int:
        return self.readout_w.shape[1]

    def named_tensors(self) -> dict[str, Tensor]:
        out = {f"layer{k}": w for k, w in enumerate(self.layers)}
        out.update(readout_w=self.readout_w, readout_b=self.readout_b, head_w=self.head_w, head_b=self.head_b)
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def encoder_parameters(self) -> list[Tensor]:
        """Layers and readout only (what a conditioning consumer needs)."""
        return [*self.layers, self.readout_w, self.readout_b]

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def save(self, path) -> None:
        save(path, {k: t.data for k, t in self.named_tensors().items()},
             {"n_layers": str(len(self.layers)), "training_time": repr(self.training_time)})

    @classmethod
    def load(cls, path) -> "GcnParams":
        tensors, meta = load(path)
        n = int(meta["n_layers"])
        widths = [tensors["layer0"].shape[0]] + [tensors[f"layer{k}"].shape[1] for k in range(n)]
        p = cls.init(widths=widths)
        for k, t in p.named_tensors().items():
            t.data = tensors[k]
        p.training_time = float(meta.get("training_time", 0.0))
        return p


def gcn_layer(H: Tensor, A_hat: Tensor, W: Tensor) -> Tensor:
    """ReLU(A_hat H W): neighbour aggregation through A_hat, then a linear update."""
    if A_hat.shape[0] != A_hat.shape[1] or A_hat.shape[1] != H.shape[0] or H.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"gcn_layer: A {A_hat.shape}, H {H.shape}, W {W.shape}")
    return T.relu(T.matmul(T.matmul(A_hat, H), W))


def readout(H: Tensor, params: GcnParams) -> Tensor:
    """Graph embedding (1, d): node mean followed by a linear projection."""
    return T.add(T.matmul(T.mean_rows(H), params.readout_w), params.readout_b)


def node_states(graph: EnvGraph, params: GcnParams) -> Tensor:
    H = Tensor(graph.features)
    A = Tensor(graph.norm_adjacency)
    for W in params.layers:
        H = gcn_layer(H, A, W)
    return H


def forward(graph: EnvGraph, params: GcnParams) -> tuple[Tensor, Tensor]:
    """Returns (scores (N, 1), graph embedding (1, d))."""
    H = node_states(graph, params)
    hg = readout(H, params)
    z = T.concat([H, T.repeat_rows(hg, H.shape[0])], axis=1)
    return T.sigmoid(T.add(T.matmul(z, params.head_w), params.head_b)), hg


def score_nodes(graph: EnvGraph, params: GcnParams) -> np.ndarray:
    with no_grad():
        return forward(graph, params)[0].data[:, 0].copy()


def graph_embedding(graph: EnvGraph, params: GcnParams) -> np.ndarray:
    with no_grad():
        return readout(node_states(graph, params), params).data[0].copy()


def gcn_loss(graph: EnvGraph, target: np.ndarray, params: GcnParams) -> Tensor:
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.size != graph.n_nodes:
        raise LengthMismatch(f"{target.size} targets for {graph.n_nodes} nodes")
    scores, _ = forward(graph, params)
    return mse(scores, Tensor(target[:, None]))


def gcn_train_step(graph: EnvGraph, target: np.ndarray, params: GcnParams, adam: Adam) -> float:
    """MSE between node scores and 0/1 path membership; returns the pre-step loss."""
    adam.zero_grad()
    with Tape() as tape:
        loss = gcn_loss(graph, target, params)
        backward(loss, tape)
    adam.step()
    return loss.item()


def path_membership(graph: EnvGraph, path) -> np.ndarray:
    idx = graph.node_index()
    out = np.zeros(graph.n_nodes)
    for c in path:
        out[idx[c]] = 1.0
    return out


def bias_costs(m: GridMap, scores: np.ndarray, lam: float = DEFAULT_LAMBDA) -> CostField:
    """cost = 1 + lam * (1 - score) on passable cells (row-major order)."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size != int(m.passable.sum()):
        raise LengthMismatch(f"{scores.size} scores for {int(m.passable.sum())} passable cells")
    costs = np.ones((m.height, m.width))
    costs[m.passable] = 1.0 + lam * (1.0 - np.clip(scores, 0.0, 1.0))
    return CostField(costs)
