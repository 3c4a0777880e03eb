"""Encoder-decoder transformer that imitates shortest paths on grid maps.

The encoder reads the flattened map (one token per cell plus a trailing
separator). The decoder emits action tokens autoregressively. Each decoder
input position carries the previous action, its step index, and a 3x3 local
view: the encoder states of the cell the agent occupies at that step and of
its eight surrounding cells (the separator state stands in for cells off the
map). The decoder therefore always knows where it is.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .gridworld import Action, Cell, GridMap, actions_to_cells, cells_to_actions
from .tensor_core import tensor as T
from .tensor_core.checkpoint import load, save
from .tensor_core.losses import masked_cross_entropy_logits
from .tensor_core.optim import Adam, uniform_init
from .tensor_core.tensor import ShapeMismatch, Tape, Tensor, backward, no_grad

# environment vocabulary
FREE, BLOCKED, START, GOAL, SEP = range(5)
ENV_VOCAB = 5
# action vocabulary; Action(i) maps to token i + 1
BOS, UP, DOWN, LEFT, RIGHT, WAIT, EOS, PAD = range(8)
ACT_VOCAB = 8
EMITTABLE = np.array([UP, DOWN, LEFT, RIGHT, WAIT, EOS])

MASK_VALUE = -1e9
VIEW = [(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
LN_EPS = 1e-9


class VocabOverflow(ValueError):
    pass


@dataclass
class PlannerConfig:
    d_model: int = 64
    h: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 512
    env_vocab: int = ENV_VOCAB
    act_vocab: int = ACT_VOCAB

    def __post_init__(self):
        if min(self.d_model, self.h, self.n_layers, self.d_ff, self.max_len) <= 0:
            raise ValueError("all dimensions must be positive")
        if self.d_model % self.h:
            raise ValueError("d_model must be divisible by h")
        if self.d_model % 4:
            raise ValueError("d_model must be a multiple of 4 for 2-D cell encodings")

    @property
    def d_k(self) -> int:
        return self.d_model // self.h


@dataclass(frozen=True)
class TokenSeq:
    env: np.ndarray  # int ids, length width * height + 1
    width: int
    height: int
    start: Cell
    goal: Cell

    def __len__(self) -> int:
        return len(self.env)


# ----------------------------------------------------------------------------
# tokens


def tokenize_env(m: GridMap, start: Cell, goal: Cell) -> TokenSeq:
    ids = np.where(m.passable.reshape(-1), FREE, BLOCKED).astype(np.int64)
    ids[m.index(start)] = START
    ids[m.index(goal)] = GOAL
    return TokenSeq(np.append(ids, SEP), m.width, m.height, start, goal)


def action_tokens(actions: Sequence[Action]) -> list[int]:
    return [int(a) + 1 for a in actions]


def token_action(tok: int) -> Action:
    return Action(tok - 1)


# ----------------------------------------------------------------------------
# positional codes


@lru_cache(maxsize=64)
def _pe_table(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    pe.setflags(write=False)
    return pe


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: (p, 2i) -> sin(p / 10000^(2i/d)), (p, 2i+1) -> cos(same)."""
    return _pe_table(int(length), int(d_model)).copy()


def cell_encoding(width: int, height: int, d_model: int) -> np.ndarray:
    """2-D sinusoidal codes for every cell, row-major: [code(x), code(y)]."""
    half = d_model // 2
    tx = _pe_table(max(width, height), half)
    xs = np.tile(np.arange(width), height)
    ys = np.repeat(np.arange(height), width)
    return np.concatenate([tx[xs], tx[ys]], axis=1)


def env_positions(width: int, height: int, d_model: int) -> np.ndarray:
    """Positional rows for a tokenized map: cell codes, then the separator's."""
    sep = _pe_table(width * height + 1, d_model)[width * height]
    return np.vstack([cell_encoding(width, height, d_model), sep[None, :]])


# ----------------------------------------------------------------------------
# attention


def causal_mask(n: int) -> np.ndarray:
    """Boolean (n, n); True where attention is allowed."""
    return np.tril(np.ones((n, n), dtype=bool))


def scaled_dot_attention(Q: Tensor, K: Tensor, V: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k) + mask) V; ``mask`` is True where allowed."""
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ShapeMismatch(f"attention: Q {Q.shape}, K {K.shape}, V {V.shape}")
    d_k = Q.shape[-1]
    scores = T.scale(T.matmul(Q, T.transpose(K)), 1.0 / math.sqrt(d_k))
    logits = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[-2:] != (Q.shape[-2], K.shape[-2]):
            raise ShapeMismatch(f"mask {mask.shape} vs scores {scores.shape}")
        logits = np.where(mask, 0.0, MASK_VALUE)
    return T.matmul(T.softmax_rows(scores, logits), V)


def attention_weights(Q: np.ndarray, K: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    with no_grad():
        s = T.scale(T.matmul(Tensor(Q), T.transpose(Tensor(K))), 1.0 / math.sqrt(Q.shape[-1]))
        logits = None if mask is None else np.where(mask, 0.0, MASK_VALUE)
        return T.softmax_rows(s, logits).data


@dataclass
class HeadWeights:
    q: list[Tensor]
    k: list[Tensor]
    v: list[Tensor]
    o: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for i, (q, k, v) in enumerate(zip(self.q, self.k, self.v)):
            out[f"{prefix}.q{i}"] = q
            out[f"{prefix}.k{i}"] = k
            out[f"{prefix}.v{i}"] = v
        out[f"{prefix}.o"] = self.o
        return out

    @classmethod
    def init(cls, rng: np.random.Generator, d_model: int, h: int) -> "HeadWeights":
        dk = d_model // h

        def w(a, b):
            return Tensor(uniform_init(rng, a, b), requires_grad=True)

        return cls([w(d_model, dk) for _ in range(h)], [w(d_model, dk) for _ in range(h)],
                   [w(d_model, dk) for _ in range(h)], w(h * dk, d_model))


def multi_head(x_q: Tensor, x_kv: Tensor, heads: HeadWeights, mask: np.ndarray | None = None) -> Tensor:
    """Concat(head_1..head_h) W^O with head_i = Attention(x_q Wq_i, x_kv Wk_i, x_kv Wv_i).

    The per-head projections are stacked column-wise so every head is
    computed in one batched attention call.
    """
    d_model = heads.q[0].shape[0]
    if x_q.shape[-1] != d_model or x_kv.shape[-1] != d_model:
        raise ShapeMismatch(f"multi_head: widths {x_q.shape[-1]}, {x_kv.shape[-1]} != {d_model}")
    h = len(heads.q)
    if h == 1:
        cat = scaled_dot_attention(T.matmul(x_q, heads.q[0]), T.matmul(x_kv, heads.k[0]),
                                   T.matmul(x_kv, heads.v[0]), mask)
        return T.matmul(cat, heads.o)
    dk = heads.q[0].shape[1]

    def split(x: Tensor, ws: list[Tensor]) -> Tensor:
        y = T.matmul(x, T.concat(ws, axis=1))
        y = T.reshape(y, y.shape[:-1] + (h, dk))
        return T.swapaxes(y, -3, -2)  # (..., h, n, dk)

    att = scaled_dot_attention(split(x_q, heads.q), split(x_kv, heads.k), split(x_kv, heads.v), mask)
    att = T.swapaxes(att, -3, -2)
    cat = T.reshape(att, att.shape[:-2] + (h * dk,))
    return T.matmul(cat, heads.o)


# ----------------------------------------------------------------------------
# parameters


@dataclass
class _Norm:
    g: Tensor
    b: Tensor

    @classmethod
    def init(cls, d: int) -> "_Norm":
        return cls(Tensor(np.ones(d), requires_grad=True), Tensor(np.zeros(d), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.g, self.b, LN_EPS)


@dataclass
class _FeedForward:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, rng, d: int, d_ff: int) -> "_FeedForward":
        return cls(Tensor(uniform_init(rng, d, d_ff), requires_grad=True), Tensor(np.zeros(d_ff), requires_grad=True),
                   Tensor(uniform_init(rng, d_ff, d), requires_grad=True), Tensor(np.zeros(d), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(T.relu(T.add(T.matmul(x, self.w1), self.b1)), self.w2), self.b2)


@dataclass
class EncoderLayer:
    attn: HeadWeights
    norm1: _Norm
    ff: _FeedForward
    norm2: _Norm

    def __call__(self, x: Tensor) -> Tensor:
        x = self.norm1(T.add(x, multi_head(x, x, self.attn)))
        return self.norm2(T.add(x, self.ff(x)))


@dataclass
class DecoderLayer:
    self_attn: HeadWeights
    norm1: _Norm
    cross_attn: HeadWeights
    norm2: _Norm
    ff: _FeedForward
    norm3: _Norm

    def __call__(self, y: Tensor, memory: Tensor, mask: np.ndarray) -> Tensor:
        y = self.norm1(T.add(y, multi_head(y, y, self.self_attn, mask)))
        y = self.norm2(T.add(y, multi_head(y, memory, self.cross_attn)))
        return self.norm3(T.add(y, self.ff(y)))


@dataclass
class TransformerParams:
    config: PlannerConfig
    env_emb: Tensor
    act_emb: Tensor
    cell_proj: Tensor
    encoder: list[EncoderLayer]
    decoder: list[DecoderLayer]
    out_w: Tensor
    out_b: Tensor
    training_time: float = 0.0
    loss_curve: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, config: PlannerConfig, seed: int = 0) -> "TransformerParams":
        rng = np.random.default_rng(seed)
        d, h, dff = config.d_model, config.h, config.d_ff

        def w(a, b):
            return Tensor(uniform_init(rng, a, b), requires_grad=True)

        enc = [EncoderLayer(HeadWeights.init(rng, d, h), _Norm.init(d), _FeedForward.init(rng, d, dff), _Norm.init(d))
               for _ in range(config.n_layers)]
        dec = [DecoderLayer(HeadWeights.init(rng, d, h), _Norm.init(d), HeadWeights.init(rng, d, h), _Norm.init(d),
                            _FeedForward.init(rng, d, dff), _Norm.init(d))
               for _ in range(config.n_layers)]
        return cls(config, w(config.env_vocab, d), w(config.act_vocab, d), w(len(VIEW) * d, d), enc, dec,
                   w(d, config.act_vocab), Tensor(np.zeros(config.act_vocab), requires_grad=True))

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"env_emb": self.env_emb, "act_emb": self.act_emb, "cell_proj": self.cell_proj}
        for i, L in enumerate(self.encoder):
            out.update(L.attn.tensors(f"enc{i}.attn"))
            out.update({f"enc{i}.norm1.g": L.norm1.g, f"enc{i}.norm1.b": L.norm1.b,
                        f"enc{i}.ff.w1": L.ff.w1, f"enc{i}.ff.b1": L.ff.b1,
                        f"enc{i}.ff.w2": L.ff.w2, f"enc{i}.ff.b2": L.ff.b2,
                        f"enc{i}.norm2.g": L.norm2.g, f"enc{i}.norm2.b": L.norm2.b})
        for i, L in enumerate(self.decoder):
            out.update(L.self_attn.tensors(f"dec{i}.self"))
            out.update(L.cross_attn.tensors(f"dec{i}.cross"))
            out.update({f"dec{i}.norm1.g": L.norm1.g, f"dec{i}.norm1.b": L.norm1.b,
                        f"dec{i}.norm2.g": L.norm2.g, f"dec{i}.norm2.b": L.norm2.b,
                        f"dec{i}.ff.w1": L.ff.w1, f"dec{i}.ff.b1": L.ff.b1,
                        f"dec{i}.ff.w2": L.ff.w2, f"dec{i}.ff.b2": L.ff.b2,
                        f"dec{i}.norm3.g": L.norm3.g, f"dec{i}.norm3.b": L.norm3.b})
        out["out_w"] = self.out_w
        out["out_b"] = self.out_b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def save(self, path) -> None:
        meta = {f"config.{k}": str(v) for k, v in asdict(self.config).items()}
        meta["training_time"] = repr(self.training_time)
        save(path, {k: t.data for k, t in self.named_tensors().items()}, meta)

    @classmethod
    def load(cls, path) -> "TransformerParams":
        tensors, meta = load(path)
        cfg = PlannerConfig(**{k[7:]: int(v) for k, v in meta.items() if k.startswith("config.")})
        params = cls.init(cfg)
        for k, t in params.named_tensors().items():
            if tensors[k].shape != t.shape:
                raise ShapeMismatch(f"checkpoint tensor {k}: {tensors[k].shape} != {t.shape}")
            t.data = tensors[k]
        params.training_time = float(meta.get("training_time", 0.0))
        return params


# ----------------------------------------------------------------------------
# forward passes


def _env_batch(tokens: Sequence[TokenSeq], cfg: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    shapes = {(t.width, t.height) for t in tokens}
    if len(shapes) != 1:
        raise ShapeMismatch("a batch must share one map size")
    w, h = shapes.pop()
    ids = np.stack([t.env for t in tokens])
    if ids.min() < 0 or ids.max() >= cfg.env_vocab:
        raise VocabOverflow("environment token outside vocabulary")
    if ids.shape[1] > cfg.max_len:
        raise VocabOverflow(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    return ids, env_positions(w, h, cfg.d_model)


def encode_batch(tokens: Sequence[TokenSeq], params: TransformerParams) -> Tensor:
    ids, pos = _env_batch(tokens, params.config)
    x = T.add(T.embed(params.env_emb, ids), Tensor(np.broadcast_to(pos, ids.shape + (pos.shape[1],))))
    for layer in params.encoder:
        x = layer(x)
    return x


def encode(tokens: TokenSeq, params: TransformerParams) -> Tensor:
    """Memory matrix of shape (len(tokens), d_model)."""
    return T.select(encode_batch([tokens], params), 0, axis=0)


def decoder_logits(memory: Tensor, dec_in: np.ndarray, cell_idx: np.ndarray, params: TransformerParams) -> Tensor:
    """Logits (B, T, V) for decoder inputs ``dec_in`` (B, T).

    ``memory`` is (B, n, d); ``cell_idx`` (B, T, 9) indexes the memory rows of
    the 3x3 view around the agent before each position's action.
    """
    cfg = params.config
    dec_in = np.asarray(dec_in, dtype=np.int64)
    if dec_in.max() >= cfg.act_vocab or dec_in.min() < 0:
        raise VocabOverflow("action token outside vocabulary")
    b, t = dec_in.shape
    pe = positional_encoding(t, cfg.d_model)
    y = T.add(T.embed(params.act_emb, dec_in), Tensor(np.broadcast_to(pe, (b, t, cfg.d_model))))
    view = T.gather_rows(memory, np.asarray(cell_idx).reshape(b, -1))
    view = T.reshape(view, (b, t, len(VIEW) * cfg.d_model))
    y = T.add(y, T.matmul(view, params.cell_proj))
    mask = causal_mask(t)
    for layer in params.decoder:
        y = layer(y, memory, mask)
    return T.add(T.matmul(y, params.out_w), params.out_b)


def _cell_track(tok: TokenSeq, actions: Sequence[int]) -> list[tuple[int, int]]:
    """Agent cell before each action; moves off the map stay put."""
    x, y = tok.start
    out = [(x, y)]
    for a in actions:
        if a in (UP, DOWN, LEFT, RIGHT, WAIT):
            dx, dy = Action(a - 1).delta
            if 0 <= x + dx < tok.width and 0 <= y + dy < tok.height:
                x, y = x + dx, y + dy
        out.append((x, y))
    return out


def _view_index(tok: TokenSeq, cells: Sequence[tuple[int, int]]) -> np.ndarray:
    """(len(cells), 9) memory rows of the 3x3 view; off-map -> separator row."""
    w, h = tok.width, tok.height
    sep = w * h
    out = np.empty((len(cells), len(VIEW)), dtype=np.int64)
    for i, (x, y) in enumerate(cells):
        for k, (dx, dy) in enumerate(VIEW):
            nx, ny = x + dx, y + dy
            out[i, k] = ny * w + nx if 0 <= nx < w and 0 <= ny < h else sep
    return out


def greedy_decode(memory: Tensor, params: TransformerParams, max_len: int, tokens: TokenSeq) -> list[int]:
    """Argmax decoding until EOS or ``max_len`` emitted tokens.

    Returns emitted action tokens, including a trailing EOS when produced.
    ``tokens`` supplies the start cell and map width for position tracking.
    """
    mem = T.reshape(memory, (1,) + memory.shape) if memory.data.ndim == 2 else memory
    out: list[int] = []
    with no_grad():
        for _ in range(max_len):
            dec_in = np.array([[BOS] + out])
            cells = _view_index(tokens, _cell_track(tokens, out))[None]
            logits = decoder_logits(mem, dec_in, cells, params).data[0, -1]
            tok = int(EMITTABLE[np.argmax(logits[EMITTABLE])])
            out.append(tok)
            if tok == EOS:
                break
    return out


def decode_actions(tokens: Sequence[int]) -> list[Action]:
    acts = []
    for t in tokens:
        if t == EOS:
            break
        acts.append(token_action(t))
    return acts


def plan(m: GridMap, start: Cell, goal: Cell, params: TransformerParams, max_len: int | None = None) -> list[Cell]:
    """Decode a raw cell sequence; validity is not guaranteed."""
    tok = tokenize_env(m, start, goal)
    with no_grad():
        memory = encode(tok, params)
    limit = max_len if max_len is not None else 2 * (m.width + m.height)
    return actions_to_cells(start, decode_actions(greedy_decode(memory, params, limit, tok)))


# ----------------------------------------------------------------------------
# training


@dataclass
class Batch:
    tokens: list[TokenSeq]
    dec_in: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    cells: np.ndarray


def make_batch(examples: Sequence[tuple[TokenSeq, Sequence[Cell]]]) -> Batch:
    seqs = [action_tokens(cells_to_actions(path)) for _, path in examples]
    t = max(len(s) for s in seqs) + 1
    b = len(examples)
    dec_in = np.full((b, t), PAD, dtype=np.int64)
    targets = np.full((b, t), PAD, dtype=np.int64)
    mask = np.zeros((b, t))
    cells = np.zeros((b, t, len(VIEW)), dtype=np.int64)
    for i, ((tok, _), s) in enumerate(zip(examples, seqs)):
        n = len(s)
        dec_in[i, 0] = BOS
        dec_in[i, 1 : n + 1] = s
        targets[i, :n] = s
        targets[i, n] = EOS
        mask[i, : n + 1] = 1.0
        view = _view_index(tok, _cell_track(tok, s))
        cells[i, : n + 1] = view
        cells[i, n + 1 :] = view[-1]
    return Batch([tok for tok, _ in examples], dec_in, targets, mask, cells)


def batch_loss(batch: Batch, params: TransformerParams) -> Tensor:
    memory = encode_batch(batch.tokens, params)
    logits = decoder_logits(memory, batch.dec_in, batch.cells, params)
    return masked_cross_entropy_logits(logits, batch.targets, batch.mask)


def train_step(examples: Sequence[tuple[TokenSeq, Sequence[Cell]]], params: TransformerParams, adam: Adam) -> float:
    """Teacher-forced cross-entropy step; returns the loss before the update."""
    batch = make_batch(examples)
    adam.zero_grad()
    with Tape() as tape:
        loss = batch_loss(batch, params)
        backward(loss, tape)
    adam.step()
    return loss.item()
