"""Conditional recurrent GAN over action sequences.

The generator is an Elman RNN fed, at every step, the embedding of its
previous action together with the noise vector ``z`` and the condition
vector. During adversarial training it emits soft action distributions so
the discriminator's gradient reaches it; at inference it decodes by argmax,
so all randomness lives in ``z``. The discriminator is an RNN over action
distributions (one-hot for expert paths) followed by an affine map and a
sigmoid.

The generator objective combines the non-saturating adversarial term with a
teacher-forced cross-entropy to expert paths under the same condition.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .gcn_encoder import GcnParams, graph_embedding
from .graph_env import build_graph
from .gridworld import Action, Cell, GridMap, Scenario, actions_to_cells, cells_to_actions, validate_path
from .planners.search import CostField, NoPath, astar
from .tensor_core import tensor as T
from .tensor_core.checkpoint import load, save
from .tensor_core.losses import bce_with_logits, masked_cross_entropy_logits
from .tensor_core.optim import Adam, uniform_init
from .tensor_core.tensor import Tape, Tensor, backward, no_grad

# shares the transformer's action vocabulary
BOS, UP, DOWN, LEFT, RIGHT, WAIT, EOS, PAD = range(8)
VOCAB = 8
EMITTABLE = np.array([UP, DOWN, LEFT, RIGHT, WAIT, EOS])
COORD_FEATURES = 6
BN_MOMENTUM = 0.1
BN_EPS = 1e-5
OFFSET_SCALE = 8.0
# displacement (dx, dy) per action token
DELTAS = np.zeros((VOCAB, 2))
DELTAS[UP], DELTAS[DOWN], DELTAS[LEFT], DELTAS[RIGHT] = (0, -1), (0, 1), (-1, 0), (1, 0)


class AllRejected(RuntimeError):
    pass


class Reject(Exception):
    """Raised by :func:`repair` when the goal cannot be reached."""

    def __init__(self, truncated_at: int, message: str = ""):
        super().__init__(message or f"goal unreachable (raw actions truncated at {truncated_at})")
        self.truncated_at = truncated_at


@dataclass
class GanConfig:
    noise_dim: int = 32
    lr: float = 1e-3
    batch: int = 32
    min_iterations: int = 1800
    lr_decay: float = 1.0  # multiplicative, applied once per epoch
    hidden: int = 64
    emb: int = 16
    max_len: int = 32
    batchnorm: bool = True
    non_saturating: bool = True
    ce_weight: float = 1.0
    adv_weight: float = 0.1
    temperature: float = 1.0
    straight_through: bool = True  # False: feed soft distributions (exact gradients)
    candidates: int = 8

    def __post_init__(self):
        if not 10 <= self.noise_dim <= 100:
            raise ValueError("noise_dim must lie in [10, 100]")
        if self.batch not in (32, 64):
            raise ValueError("batch must be 32 or 64")
        if self.min_iterations < 1:
            raise ValueError("min_iterations must be positive")


def _w(rng, a, b) -> Tensor:
    return Tensor(uniform_init(rng, a, b), requires_grad=True)


def _zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


@dataclass
class _BatchNorm:
    """Batch norm with one set of running statistics per time step.

    Hidden-state statistics drift along a rollout, so a single running
    average would not match any step at inference. Steps past the last row
    reuse it.
    """

    gain: Tensor
    bias: Tensor
    running_mean: np.ndarray  # (steps, d)
    running_var: np.ndarray

    @classmethod
    def init(cls, d: int, steps: int = 1) -> "_BatchNorm":
        return cls(Tensor(np.ones(d), requires_grad=True), _zeros(d), np.zeros((steps, d)), np.ones((steps, d)))

    def __call__(self, x: Tensor, training: bool, track: bool = True, step: int = 0) -> Tensor:
        k = min(step, len(self.running_mean) - 1)
        if training and x.shape[0] > 1:
            out, mu, var = T.batch_norm(x, self.gain, self.bias, BN_EPS)
            if track:
                self.running_mean[k] = (1 - BN_MOMENTUM) * self.running_mean[k] + BN_MOMENTUM * mu
                self.running_var[k] = (1 - BN_MOMENTUM) * self.running_var[k] + BN_MOMENTUM * var
            return out
        return T.affine_norm(x, self.running_mean[k], self.running_var[k], self.gain, self.bias, BN_EPS)


@dataclass
class GeneratorParams:
    act_emb: Tensor
    w_emb: Tensor
    w_off: Tensor
    w_zc: Tensor
    w_h: Tensor
    b_h: Tensor
    norm: _BatchNorm | None
    w_out: Tensor
    b_out: Tensor

    @classmethod
    def init(cls, rng, cfg: GanConfig, cond_dim: int) -> "GeneratorParams":
        h = cfg.hidden
        return cls(_w(rng, VOCAB, cfg.emb), _w(rng, cfg.emb, h), _w(rng, 2, h), _w(rng, cfg.noise_dim + cond_dim, h),
                   _w(rng, h, h), _zeros(h), _BatchNorm.init(h, cfg.max_len) if cfg.batchnorm else None,
                   _w(rng, h, VOCAB), _zeros(VOCAB))

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"act_emb": self.act_emb, "w_emb": self.w_emb, "w_off": self.w_off, "w_zc": self.w_zc, "w_h": self.w_h,
               "b_h": self.b_h, "w_out": self.w_out, "b_out": self.b_out}
        if self.norm is not None:
            out.update(bn_gain=self.norm.gain, bn_bias=self.norm.bias)
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def _logits(self, h: Tensor, training: bool, track: bool, step: int) -> Tensor:
        if self.norm is not None:
            h = self.norm(h, training, track, step)
        return T.add(T.matmul(h, self.w_out), self.b_out)


@dataclass
class DiscriminatorParams:
    act_emb: Tensor
    w_emb: Tensor
    w_off: Tensor
    w_c: Tensor
    w_h: Tensor
    b_h: Tensor
    norm: _BatchNorm | None
    w_f: Tensor
    b_f: Tensor

    @classmethod
    def init(cls, rng, cfg: GanConfig, cond_dim: int, zero: bool = False) -> "DiscriminatorParams":
        h = cfg.hidden
        w_f = _zeros(h, 1) if zero else _w(rng, h, 1)
        return cls(_w(rng, VOCAB, cfg.emb), _w(rng, cfg.emb, h), _w(rng, 2, h), _w(rng, cond_dim, h), _w(rng, h, h),
                   _zeros(h), _BatchNorm.init(h) if cfg.batchnorm else None, w_f, _zeros(1))

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"act_emb": self.act_emb, "w_emb": self.w_emb, "w_off": self.w_off, "w_c": self.w_c, "w_h": self.w_h,
               "b_h": self.b_h, "w_f": self.w_f, "b_f": self.b_f}
        if self.norm is not None:
            out.update(bn_gain=self.norm.gain, bn_bias=self.norm.bias)
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_tensors().values())


@dataclass
class GanModel:
    config: GanConfig
    gen: GeneratorParams
    disc: DiscriminatorParams
    cond_dim: int
    training_time: float = 0.0
    d_losses: list[float] = field(default_factory=list)
    g_losses: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, config: GanConfig, cond_dim: int, seed: int = 0, zero_disc: bool = False) -> "GanModel":
        rng = np.random.default_rng(seed)
        return cls(config, GeneratorParams.init(rng, config, cond_dim),
                   DiscriminatorParams.init(rng, config, cond_dim, zero_disc), cond_dim)

    def n_params(self) -> int:
        return sum(p.size for p in self.gen.parameters() + self.disc.parameters())

    def save(self, path) -> None:
        tensors = {f"gen.{k}": t.data for k, t in self.gen.named_tensors().items()}
        tensors.update({f"disc.{k}": t.data for k, t in self.disc.named_tensors().items()})
        for tag, p in (("gen", self.gen), ("disc", self.disc)):
            if p.norm is not None:
                tensors[f"{tag}.bn_running_mean"] = p.norm.running_mean
                tensors[f"{tag}.bn_running_var"] = p.norm.running_var
        meta = {f"config.{k}": str(v) for k, v in asdict(self.config).items()}
        meta["cond_dim"] = str(self.cond_dim)
        meta["training_time"] = repr(self.training_time)
        save(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "GanModel":
        tensors, meta = load(path)
        kinds = {f.name: f.type for f in GanConfig.__dataclass_fields__.values()}
        kw = {}
        for k, v in meta.items():
            if k.startswith("config."):
                name = k[7:]
                kind = kinds[name]
                kw[name] = v == "True" if kind in ("bool", bool) else (float(v) if kind in ("float", float) else int(v))
        model = cls.init(GanConfig(**kw), int(meta["cond_dim"]))
        for tag, p in (("gen", model.gen), ("disc", model.disc)):
            for k, t in p.named_tensors().items():
                t.data = tensors[f"{tag}.{k}"]
            if p.norm is not None:
                p.norm.running_mean = tensors[f"{tag}.bn_running_mean"]
                p.norm.running_var = tensors[f"{tag}.bn_running_var"]
        model.training_time = float(meta.get("training_time", 0.0))
        return model


# ----------------------------------------------------------------------------
# conditioning


class Condition(NamedTuple):
    """Conditioning for one query: a dense vector plus the raw goal offset (dx, dy)."""

    vector: np.ndarray
    offset: tuple[int, int]


def coord_summary(m: GridMap, start: Cell, goal: Cell) -> np.ndarray:
    w, h = m.width, m.height
    return np.array([start.x / w, start.y / h, goal.x / w, goal.y / h, (goal.x - start.x) / w, (goal.y - start.y) / h])


def condition_vector(m: GridMap, start: Cell, goal: Cell, gcn: GcnParams) -> np.ndarray:
    """Graph embedding of the instance followed by a start/goal coordinate summary."""
    g = build_graph(m, Scenario(((start, goal),)))
    return np.concatenate([graph_embedding(g, gcn), coord_summary(m, start, goal)])


def condition(m: GridMap, start: Cell, goal: Cell, gcn: GcnParams) -> Condition:
    return Condition(condition_vector(m, start, goal, gcn), (goal.x - start.x, goal.y - start.y))


def _step_inputs(emb: Tensor, w_emb: Tensor, w_off: Tensor, x: Tensor, r: Tensor) -> Tensor:
    return T.add(T.matmul(T.matmul(x, emb), w_emb), T.matmul(r, w_off))


def _offset_track(tokens: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Remaining offset (scaled) after each token of ``tokens`` (B, T)."""
    moved = np.cumsum(DELTAS[tokens], axis=1)
    return (offsets[:, None, :] - moved) / OFFSET_SCALE


# ----------------------------------------------------------------------------
# generator
#
# At each step the cell sees the previous action, the remaining offset to the
# goal after that action, and the fixed (z, condition) projection.


def _gen_cell(gen: GeneratorParams, x: Tensor, zc: Tensor, h: Tensor) -> Tensor:
    return T.tanh(T.add(T.add(T.add(x, zc), T.matmul(h, gen.w_h)), gen.b_h))


def _straight_through(p: Tensor, done: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """One-hot argmax in the forward pass, identity gradient to ``p``.

    Rows already finished (``done``) emit PAD with no gradient. Returns the
    hard tensor and the updated ``done`` flags.
    """
    pick = EMITTABLE[np.argmax(p.data[:, EMITTABLE], axis=1)]
    pick = np.where(done, PAD, pick)
    hard = np.eye(VOCAB)[pick]
    live = (~done)[:, None].astype(np.float64)
    out = T._make(hard, (p,), lambda g: (g * live,))
    return out, done | (pick == EOS)


def _gen_free_run(gen: GeneratorParams, z: Tensor, cond: Tensor, offsets: np.ndarray, steps: int,
                  temperature: float, training: bool, hard: bool = True) -> Tensor:
    """Autoregressive rollout; returns action distributions (B, steps, V).

    With ``hard`` the forward values are one-hot and match argmax decoding
    (PAD after EOS) while gradients flow through the softmax
    (straight-through estimator). Otherwise the soft distributions are fed
    back and returned as-is.
    """
    b = z.shape[0]
    zc = T.matmul(T.concat([z, cond], axis=1), gen.w_zc)
    h = Tensor(np.zeros((b, gen.w_h.shape[0])))
    prev = Tensor(np.tile(np.eye(VOCAB)[BOS], (b, 1)))
    r = Tensor(np.asarray(offsets, dtype=np.float64) / OFFSET_SCALE)
    deltas = Tensor(DELTAS / OFFSET_SCALE)
    done = np.zeros(b, dtype=bool)
    outs = []
    for k in range(steps):
        h = _gen_cell(gen, _step_inputs(gen.act_emb, gen.w_emb, gen.w_off, prev, r), zc, h)
        logits = gen._logits(h, training, track=False, step=k)
        prev = T.softmax_rows(T.scale(logits, 1.0 / temperature))
        if hard:
            prev, done = _straight_through(prev, done)
        r = T.sub(r, T.matmul(prev, deltas))
        outs.append(prev)
    return T.stack(outs, axis=1)


def _gen_teacher_logits(gen: GeneratorParams, z: Tensor, cond: Tensor, offsets: np.ndarray,
                        dec_in: np.ndarray, training: bool) -> Tensor:
    b, t = dec_in.shape
    zc = T.matmul(T.concat([z, cond], axis=1), gen.w_zc)
    r = Tensor(_offset_track(dec_in, np.asarray(offsets, dtype=np.float64)))
    xs = T.add(T.matmul(T.embed(gen.act_emb, dec_in), gen.w_emb), T.matmul(r, gen.w_off))
    h = Tensor(np.zeros((b, gen.w_h.shape[0])))
    outs = []
    for k in range(t):
        h = _gen_cell(gen, T.select(xs, k, axis=1), zc, h)
        outs.append(gen._logits(h, training, track=training, step=k))
    return T.stack(outs, axis=1)


def generate(z: np.ndarray, cond: Condition, model: GanModel, max_len: int | None = None) -> list[int]:
    """Argmax rollout for one noise vector; stops after EOS or ``max_len`` tokens."""
    gen = model.gen
    max_len = model.config.max_len if max_len is None else max_len
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    if z.shape[1] != model.config.noise_dim:
        raise ValueError(f"noise vector has length {z.shape[1]}, expected {model.config.noise_dim}")
    out: list[int] = []
    with no_grad():
        zc = T.matmul(Tensor(np.concatenate([z, np.reshape(cond.vector, (1, -1))], axis=1)), gen.w_zc)
        h = Tensor(np.zeros((1, gen.w_h.shape[0])))
        prev = BOS
        r = np.asarray(cond.offset, dtype=np.float64)
        for k in range(max_len):
            x = T.add(T.matmul(T.embed(gen.act_emb, [prev]), gen.w_emb),
                      T.matmul(Tensor(r[None] / OFFSET_SCALE), gen.w_off))
            h = _gen_cell(gen, x, zc, h)
            logits = gen._logits(h, training=False, track=False, step=k).data[0]
            prev = int(EMITTABLE[np.argmax(logits[EMITTABLE])])
            r = r - DELTAS[prev]
            out.append(prev)
            if prev == EOS:
                break
    return out


def tokens_to_actions(tokens: Sequence[int]) -> list[Action]:
    acts = []
    for t in tokens:
        if t == EOS:
            break
        acts.append(Action(t - 1))
    return acts


# ----------------------------------------------------------------------------
# discriminator


def _disc_logit(disc: DiscriminatorParams, seq: Tensor, cond: Tensor, offsets: np.ndarray, training: bool,
                track: bool = True) -> Tensor:
    """Raw score f(x) of shape (B, 1) for action distributions ``seq`` (B, T, V)."""
    b, t, _ = seq.shape
    xs = T.matmul(T.matmul(seq, disc.act_emb), disc.w_emb)
    # remaining offset after each step: r0 minus the running (expected) displacement
    upper = np.triu(np.ones((t, t)))
    moved = T.swapaxes(T.matmul(T.swapaxes(T.matmul(seq, Tensor(DELTAS / OFFSET_SCALE)), 1, 2), Tensor(upper)), 1, 2)
    r0 = np.repeat(np.asarray(offsets, dtype=np.float64)[:, None, :] / OFFSET_SCALE, t, axis=1)
    xs = T.add(xs, T.matmul(T.sub(Tensor(r0), moved), disc.w_off))
    cp = T.matmul(cond, disc.w_c)
    h = Tensor(np.zeros((b, disc.w_h.shape[0])))
    for k in range(t):
        h = T.tanh(T.add(T.add(T.add(T.select(xs, k, axis=1), cp), T.matmul(h, disc.w_h)), disc.b_h))
    if disc.norm is not None:
        h = disc.norm(h, training, track)
    return T.add(T.matmul(h, disc.w_f), disc.b_f)


def one_hot_sequences(token_seqs: Sequence[Sequence[int]], length: int) -> np.ndarray:
    """Pad with EOS then PAD to ``length``; returns (B, length, V)."""
    out = np.zeros((len(token_seqs), length, VOCAB))
    for i, seq in enumerate(token_seqs):
        toks = list(seq)
        if not toks or toks[-1] != EOS:
            toks = toks + [EOS]
        toks = toks[:length] + [PAD] * max(0, length - len(toks))
        out[i, np.arange(length), toks] = 1.0
    return out


def discriminate(tokens: Sequence[int], cond: Condition, model: GanModel) -> float:
    """Probability in (0, 1) that the action sequence is an expert path."""
    seq = one_hot_sequences([tokens], model.config.max_len)
    with no_grad():
        f = _disc_logit(model.disc, Tensor(seq), Tensor(np.reshape(cond.vector, (1, -1))),
                        np.array([cond.offset]), training=False)
    return float(T.sigmoid(f).data[0, 0])


# ----------------------------------------------------------------------------
# training


@dataclass
class RealBatch:
    """Expert action-token sequences with their conditioning."""

    tokens: list[list[int]]
    conditions: np.ndarray  # (B, cond_dim)
    offsets: np.ndarray  # (B, 2) raw goal offsets


def _teacher_arrays(tokens: Sequence[Sequence[int]], length: int):
    b = len(tokens)
    dec_in = np.full((b, length), PAD, dtype=np.int64)
    targets = np.full((b, length), PAD, dtype=np.int64)
    mask = np.zeros((b, length))
    for i, seq in enumerate(tokens):
        seq = list(seq)[: length - 1]
        n = len(seq)
        dec_in[i, 0] = BOS
        dec_in[i, 1 : n + 1] = seq
        targets[i, :n] = seq
        targets[i, n] = EOS
        mask[i, : n + 1] = 1.0
    return dec_in, targets, mask


def generator_loss(model: GanModel, z: np.ndarray, real: RealBatch, training: bool = True) -> Tensor:
    cfg = model.config
    cond = Tensor(real.conditions)
    zt = Tensor(z)
    fake = _gen_free_run(model.gen, zt, cond, real.offsets, cfg.max_len, cfg.temperature, training,
                         cfg.straight_through)
    f = _disc_logit(model.disc, fake, cond, real.offsets, training=False)
    if cfg.non_saturating:
        adv = bce_with_logits(f, np.ones(f.shape))
    else:
        adv = T.scale(bce_with_logits(f, np.zeros(f.shape)), -1.0)
    adv = T.scale(adv, cfg.adv_weight)
    if cfg.ce_weight == 0:
        return adv
    dec_in, targets, mask = _teacher_arrays(real.tokens, cfg.max_len)
    logits = _gen_teacher_logits(model.gen, zt, cond, real.offsets, dec_in, training)
    return T.add(adv, T.scale(masked_cross_entropy_logits(logits, targets, mask), cfg.ce_weight))


def discriminator_loss(model: GanModel, real_seq: np.ndarray, fake_seq: np.ndarray, cond: np.ndarray,
                       offsets: np.ndarray, training: bool = True) -> Tensor:
    """BCE with real -> 1 and generated -> 0 over one concatenated batch."""
    seq = Tensor(np.concatenate([real_seq, fake_seq]))
    c = Tensor(np.concatenate([cond, cond]))
    f = _disc_logit(model.disc, seq, c, np.concatenate([offsets, offsets]), training)
    labels = np.concatenate([np.ones((len(real_seq), 1)), np.zeros((len(fake_seq), 1))])
    return bce_with_logits(f, labels)


@dataclass
class GanOptimizers:
    gen: Adam
    disc: Adam

    @classmethod
    def for_model(cls, model: GanModel) -> "GanOptimizers":
        cfg = model.config
        return cls(Adam(model.gen.parameters(), lr=cfg.lr, decay=cfg.lr_decay),
                   Adam(model.disc.parameters(), lr=cfg.lr, decay=cfg.lr_decay))


def gan_train_step(real: RealBatch, model: GanModel, opts: GanOptimizers, rng: np.random.Generator,
                   train_disc: bool = True, train_gen: bool = True) -> tuple[float, float]:
    """One discriminator step then one generator step; returns (d_loss, g_loss) before updates."""
    cfg = model.config
    b = len(real.tokens)
    z = rng.standard_normal((b, cfg.noise_dim))
    with no_grad():
        fake = _gen_free_run(model.gen, Tensor(z), Tensor(real.conditions), real.offsets, cfg.max_len,
                             cfg.temperature, True, cfg.straight_through).data
    real_seq = one_hot_sequences(real.tokens, cfg.max_len)

    opts.disc.zero_grad()
    with Tape() as tape:
        d_loss = discriminator_loss(model, real_seq, fake, real.conditions, real.offsets, training=True)
        if train_disc:
            backward(d_loss, tape)
    if train_disc:
        opts.disc.step()

    opts.gen.zero_grad()
    with Tape() as tape:
        g_loss = generator_loss(model, z, real, training=True)
        if train_gen:
            backward(g_loss, tape)
    opts.disc.zero_grad()
    if train_gen:
        opts.gen.step()
    return d_loss.item(), g_loss.item()


# ----------------------------------------------------------------------------
# candidates


@dataclass
class Candidate:
    tokens: list[int]
    score: float
    valid: bool
    path: list[Cell] | None = None
    source: str = "gan-candidate"


@dataclass
class CandidateSet:
    candidates: list[Candidate]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate set needs at least one entry")


def raw_cells(start: Cell, tokens: Sequence[int]) -> list[Cell]:
    return actions_to_cells(start, tokens_to_actions(tokens))


def repair(m: GridMap, raw: Sequence[Action], start: Cell, goal: Cell,
           field: CostField | None = None) -> list[Cell]:
    """Follow ``raw`` from ``start`` until the first invalid move, then A* to the goal.

    A raw sequence that already reaches the goal is returned as-is, with any
    actions after the first arrival dropped. Raises :class:`Reject` when the
    goal is unreachable.
    """
    path = [start]
    cut = 0
    for a in raw:
        nxt = actions_to_cells(path[-1], [a])[-1]
        if not m.is_passable(nxt):
            break
        path.append(nxt)
        cut += 1
        if nxt == goal:
            return path
    if path[-1] == goal:
        return path
    field = CostField.uniform(m) if field is None else field
    try:
        tail = astar(field, m, path[-1], goal)
    except NoPath:
        raise Reject(cut) from None
    return path + tail[1:]


def sample_candidates(m: GridMap, start: Cell, goal: Cell, model: GanModel, gcn: GcnParams,
                      rng: np.random.Generator, k: int | None = None, field: CostField | None = None,
                      max_len: int | None = None) -> CandidateSet:
    cond = condition(m, start, goal, gcn)
    k = model.config.candidates if k is None else k
    limit = max_len if max_len is not None else max(model.config.max_len, 2 * (m.width + m.height))
    out = []
    for _ in range(k):
        toks = generate(rng.standard_normal(model.config.noise_dim), cond, model, limit)
        score = discriminate(toks, cond, model)
        cells = raw_cells(start, toks)
        valid = validate_path(m, cells, start, goal)
        try:
            path = repair(m, tokens_to_actions(toks), start, goal, field)
        except Reject:
            path = None
        out.append(Candidate(toks, score, valid, path))
    return CandidateSet(out)


def select_best(candidates: CandidateSet, m: GridMap, cfg=None) -> Candidate:
    """Usable candidate with the shortest path; ties go to the higher score, then the lower index.

    Length is the step distance (Waits count 0), so ``cfg`` does not change
    the ranking; it is accepted for symmetry with the metric functions.
    """
    length = _path_length
    best = None
    best_key = None
    for i, c in enumerate(candidates.candidates):
        if c.path is None:
            continue
        key = (length(c.path), -c.score, i)
        if best_key is None or key < best_key:
            best, best_key = c, key
    if best is None:
        raise AllRejected("no candidate could be repaired")
    return best


def _path_length(path: Sequence[Cell]) -> float:
    return float(sum(abs(a.x - b.x) + abs(a.y - b.y) for a, b in zip(path, path[1:])))


# ----------------------------------------------------------------------------
# training loop


@dataclass
class GanExample:
    map: GridMap
    start: Cell
    goal: Cell
    paths: list[list[Cell]]  # expert paths to sample from


def train_gan(examples: Sequence[GanExample], gcn: GcnParams, config: GanConfig | None = None, seed: int = 0,
              iterations: int | None = None, on_step: Callable[[int, float, float], None] | None = None,
              model: GanModel | None = None) -> GanModel:
    """Adversarial training for ``iterations`` (at least ``config.min_iterations``) steps."""
    config = config or GanConfig()
    iterations = config.min_iterations if iterations is None else iterations
    rng = np.random.default_rng(seed)
    conds = np.stack([condition_vector(e.map, e.start, e.goal, gcn) for e in examples])
    offsets = np.array([(e.goal.x - e.start.x, e.goal.y - e.start.y) for e in examples], dtype=np.float64)
    model = model or GanModel.init(config, conds.shape[1], seed=seed)
    opts = GanOptimizers.for_model(model)
    per_epoch = max(1, len(examples) // config.batch)
    t0 = time.perf_counter()
    for it in range(iterations):
        idx = rng.choice(len(examples), size=config.batch, replace=len(examples) < config.batch)
        toks = []
        for i in idx:
            paths = examples[i].paths
            p = paths[int(rng.integers(len(paths)))]
            toks.append([int(a) + 1 for a in cells_to_actions(p)])
        d, g = gan_train_step(RealBatch(toks, conds[idx], offsets[idx]), model, opts, rng)
        model.d_losses.append(d)
        model.g_losses.append(g)
        if on_step is not None:
            on_step(it, d, g)
        if (it + 1) % per_epoch == 0:
            opts.gen.decay_lr()
            opts.disc.decay_lr()
    model.training_time += time.perf_counter() - t0
    return model
