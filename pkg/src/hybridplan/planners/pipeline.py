"""The staged planner: GCN cost biasing, Transformer proposal, GAN candidates, A* fallback."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..gridworld import Cell, GridMap, Scenario, actions_to_cells, validate_path
from .search import CostField, NoPath, astar

TRANSFORMER = "transformer"
GAN_CANDIDATE = "gan-candidate"
ASTAR_FALLBACK = "astar-fallback"
FALLBACKS = ("astar", "repair")


@dataclass(frozen=True)
class PipelineConfig:
    """Stage switches plus the fallback policy.

    ``fallback="astar"`` keeps only proposals that are valid as decoded and
    runs A* on the cost field if nothing survives. ``fallback="repair"``
    additionally repairs an invalid Transformer proposal before falling back.
    Either way the result is a valid path whenever one exists.
    """

    use_transformer: bool = False
    use_gnn: bool = False
    use_gan: bool = False
    lam: float = 0.5
    candidates: int = 8
    fallback: str = "astar"
    seed: int = 0

    def __post_init__(self):
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")
        if self.candidates < 1:
            raise ValueError("need at least one candidate")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    @property
    def name(self) -> str:
        parts = [s for s, on in (("transformer", self.use_transformer), ("gnn", self.use_gnn),
                                 ("gan", self.use_gan)) if on]
        return "+".join(parts) if parts else "astar"


def all_configs(**kw) -> list[PipelineConfig]:
    """All 16 combinations of the three stage switches and the two fallback policies."""
    return [PipelineConfig(t, g, a, fallback=f, **kw) for t, g, a, f in product((False, True), (False, True),
                                                                               (False, True), FALLBACKS)]


@dataclass
class Models:
    """Trained parameters; only the stages a config enables need to be present.

    The GAN is conditioned on the GCN graph embedding, so ``use_gan``
    requires ``gcn`` even when ``use_gnn`` is off.
    """

    transformer: object = None
    gcn: object = None
    gan: object = None

    def check(self, cfg: PipelineConfig) -> None:
        missing = []
        if cfg.use_transformer and self.transformer is None:
            missing.append("transformer")
        if (cfg.use_gnn or cfg.use_gan) and self.gcn is None:
            missing.append("gcn")
        if cfg.use_gan and self.gan is None:
            missing.append("gan")
        if missing:
            raise ValueError(f"config needs models: {', '.join(missing)}")


@dataclass
class PlanResult:
    path: list[Cell]
    provenance: str
    timings: dict[str, float] = field(default_factory=dict)
    repaired: bool = False
    n_candidates: int = 0
    notes: list[str] = field(default_factory=list)


def _cost_field(m: GridMap, start: Cell, goal: Cell, models: Models, cfg: PipelineConfig) -> CostField:
    if not cfg.use_gnn:
        return CostField.uniform(m)
    from ..gcn_encoder import bias_costs, score_nodes
    from ..graph_env import build_graph

    scores = score_nodes(build_graph(m, Scenario(((start, goal),))), models.gcn)
    return bias_costs(m, scores, cfg.lam)


def hybrid_plan(m: GridMap, start: Cell, goal: Cell, models: Models | None, config: PipelineConfig) -> PlanResult:
    from ..path_gan import Candidate, CandidateSet, Reject, condition, discriminate, repair, sample_candidates, \
        select_best

    models = models or Models()
    models.check(config)
    if not (m.is_passable(start) and m.is_passable(goal)):
        raise NoPath(f"start {start} or goal {goal} is not passable")
    timings: dict[str, float] = {}
    notes: list[str] = []

    t0 = time.perf_counter()
    field_ = _cost_field(m, start, goal, models, config)
    timings["gnn"] = time.perf_counter() - t0

    pool: list[Candidate] = []
    sources: list[str] = []
    repaired_flags: list[bool] = []
    if config.use_transformer:
        from ..transformer_planner import VocabOverflow, decode_actions, encode, greedy_decode, tokenize_env
        from ..tensor_core.tensor import no_grad

        t0 = time.perf_counter()
        try:
            tok = tokenize_env(m, start, goal)
            with no_grad():
                memory = encode(tok, models.transformer)
            toks = greedy_decode(memory, models.transformer, 2 * (m.width + m.height), tok)
            acts = decode_actions(toks)
            raw = actions_to_cells(start, acts)
            if validate_path(m, raw, start, goal):
                pool.append(Candidate(toks, 0.5, True, raw, TRANSFORMER))
                sources.append(TRANSFORMER)
                repaired_flags.append(False)
            elif config.fallback == "repair":
                try:
                    fixed = repair(m, acts, start, goal, field_)
                    pool.append(Candidate(toks, 0.5, False, fixed, TRANSFORMER))
                    sources.append(TRANSFORMER)
                    repaired_flags.append(True)
                except Reject as e:
                    notes.append(str(e))
            else:
                notes.append("transformer proposal invalid")
        except VocabOverflow as e:
            notes.append(f"transformer skipped: {e}")
        timings["transformer"] = time.perf_counter() - t0

    if config.use_gan:
        t0 = time.perf_counter()
        rng = np.random.default_rng(config.seed)
        cset = sample_candidates(m, start, goal, models.gan, models.gcn, rng, k=config.candidates, field=field_)
        for c in cset.candidates:
            pool.append(c)
            sources.append(GAN_CANDIDATE)
            repaired_flags.append(not c.valid)
        if pool and sources[0] == TRANSFORMER:
            # score the Transformer proposal with the same discriminator
            cond = condition(m, start, goal, models.gcn)
            pool[0].score = discriminate(pool[0].tokens, cond, models.gan)
        timings["gan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = None
    usable = [c for c in pool if c.path is not None]
    if usable:
        try:
            best = select_best(CandidateSet(pool), m)
            k = next(i for i, c in enumerate(pool) if c is best)
            result = PlanResult(best.path, sources[k], repaired=repaired_flags[k])
        except Exception as e:  # AllRejected
            notes.append(str(e))
    if result is None:
        result = PlanResult(astar(field_, m, start, goal), ASTAR_FALLBACK)
    timings["select"] = time.perf_counter() - t0
    result.timings = timings
    result.n_candidates = len(pool)
    result.notes = notes
    assert validate_path(m, result.path, start, goal)
    return result


def replan(m_new: GridMap, current: Cell, goal: Cell, models: Models | None, config: PipelineConfig) -> PlanResult:
    """Discard the previous plan and run the full pipeline from ``current`` on the updated map."""
    if not m_new.is_passable(current):
        raise ValueError(f"current cell {current} is blocked in the updated map")
    return hybrid_plan(m_new, current, goal, models, config)
