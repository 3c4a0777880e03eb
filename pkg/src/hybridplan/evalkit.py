"""Path metrics, resource accounting and the module ablation runner.

Time is traversal time under a unit-speed model (timesteps × step_time),
not planner CPU time; CPU time is reported separately as inference time.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gridworld import Cell
from .instances import Instance
from .planners.pipeline import Models, PipelineConfig, hybrid_plan
from .planners.search import bfs_distance
from .tensor_core.checkpoint import atomic_write

CSV_HEADER = ("config", "dataset", "path_length", "time_efficiency", "energy", "parameters",
              "training_time_s", "inference_time_ms", "failures")
WALL_CLOCK = ("training_time_s", "inference_time_ms")


class ZeroOptimal(ValueError):
    pass


@dataclass(frozen=True)
class MetricsConfig:
    power: float = 1.0  # watts
    step_time: float = 1.0  # seconds per timestep; a Wait takes one step too

    def __post_init__(self):
        if self.power <= 0 or self.step_time <= 0:
            raise ValueError("power and step_time must be positive")


@dataclass
class MetricsReport:
    path_length: float
    time_efficiency: float
    energy: float
    parameters: int = 0
    training_time: float = 0.0
    inference_time: float = 0.0  # milliseconds


def path_length(path: Sequence[Cell]) -> float:
    """Sum of per-step distances; a Wait (repeated cell) contributes 0."""
    return float(sum(abs(a.x - b.x) + abs(a.y - b.y) for a, b in zip(path, path[1:])))


def time_planned(path: Sequence[Cell], cfg: MetricsConfig = MetricsConfig()) -> float:
    return max(len(path) - 1, 0) * cfg.step_time


def time_efficiency(planned_time: float, optimal_time: float, literal: bool = False) -> float:
    """Percent of optimal: optimal / planned × 100, clamped to 100.

    ``literal=True`` gives planned / optimal × 100 instead (≥ 100 for
    suboptimal plans, unclamped).
    """
    if optimal_time <= 0:
        if planned_time <= 0:
            return 100.0
        raise ZeroOptimal("optimal time is zero but the plan takes time")
    if literal:
        return planned_time / optimal_time * 100.0
    if planned_time <= 0:
        return 100.0
    return min(optimal_time / planned_time * 100.0, 100.0)


def energy(planned_time: float, cfg: MetricsConfig = MetricsConfig()) -> float:
    return cfg.power * planned_time


def _param_arrays(obj) -> list:
    if obj is None:
        return []
    if hasattr(obj, "parameters"):
        return list(obj.parameters())
    if hasattr(obj, "shape"):
        return [obj]
    out = []
    for o in obj:
        out.extend(_param_arrays(o))
    return out


def count_params(models, config: PipelineConfig | None = None) -> int:
    """Scalar count over learnable tensors.

    With a :class:`Models` bundle and a ``config`` only the enabled stages
    count; the GAN row includes the GCN encoder it is conditioned on.
    Otherwise ``models`` may be a parameter container, an array, or an
    iterable of either.
    """
    if isinstance(models, Models):
        cfg = config or PipelineConfig(True, True, True)
        parts = []
        if cfg.use_transformer:
            parts.append(models.transformer)
        if cfg.use_gnn:
            parts.append(models.gcn)
        elif cfg.use_gan and models.gcn is not None:
            parts.append(models.gcn.encoder_parameters())
        if cfg.use_gan:
            parts.append(models.gan.gen)
            parts.append(models.gan.disc)
        models = parts
    return int(sum(int(np.prod(p.shape)) for p in _param_arrays(models)))


def training_time(models: Models, config: PipelineConfig) -> float:
    total = 0.0
    if config.use_transformer and models.transformer is not None:
        total += models.transformer.training_time
    if (config.use_gnn or config.use_gan) and models.gcn is not None:
        total += models.gcn.training_time
    if config.use_gan and models.gan is not None:
        total += models.gan.training_time
    return total


def evaluate_path(path: Sequence[Cell], optimal_steps: int, cfg: MetricsConfig = MetricsConfig()) -> MetricsReport:
    t = time_planned(path, cfg)
    return MetricsReport(path_length(path), time_efficiency(t, optimal_steps * cfg.step_time), energy(t, cfg))


# ----------------------------------------------------------------------------
# ablation


ABLATION_ROWS = (("baseline", dict()), ("+gnn", dict(use_gnn=True)), ("+gan", dict(use_gan=True)),
                 ("+gnn+gan", dict(use_gnn=True, use_gan=True)))


def ablation_configs(**kw) -> list[tuple[str, PipelineConfig]]:
    """The four rows in order: Transformer baseline, then adding GCN, GAN, both."""
    return [(name, PipelineConfig(use_transformer=True, **flags, **kw)) for name, flags in ABLATION_ROWS]


@dataclass
class AblationRow:
    config: str
    dataset: str
    path_length: float
    time_efficiency: float
    energy: float
    parameters: int
    training_time_s: float
    inference_time_ms: float
    failures: int

    def formatted(self) -> dict[str, str]:
        return {"config": self.config, "dataset": self.dataset, "path_length": f"{self.path_length:.2f}",
                "time_efficiency": f"{self.time_efficiency:.2f}", "energy": f"{self.energy:.2f}",
                "parameters": str(self.parameters), "training_time_s": f"{self.training_time_s:.3f}",
                "inference_time_ms": f"{self.inference_time_ms:.3f}", "failures": str(self.failures)}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HPL_THREADS", "1")))
    except ValueError:
        return 1


def _run_one(inst: Instance, models: Models, cfg: PipelineConfig, mcfg: MetricsConfig):
    try:
        t0 = time.perf_counter()
        res = hybrid_plan(inst.map, inst.start, inst.goal, models, cfg)
        ms = (time.perf_counter() - t0) * 1000.0
        opt = bfs_distance(inst.map, inst.start, inst.goal)
        return evaluate_path(res.path, opt, mcfg), ms
    except Exception:
        return None, 0.0


def run_ablation(datasets: Mapping[str, Sequence[Instance]], configs: Sequence[tuple[str, PipelineConfig]],
                 models: Models, cfg: MetricsConfig = MetricsConfig()) -> list[AblationRow]:
    """One row per (config, dataset), configs outermost, in the given order.

    Planner errors are counted in ``failures`` and never abort the table.
    ``HPL_THREADS`` caps how many instances are evaluated concurrently.
    """
    names = [n for n, _ in configs]
    if "baseline" not in names or "+gnn+gan" not in names:
        raise ValueError("ablation needs at least the baseline and +gnn+gan rows")
    rows = []
    workers = _threads()
    for name, pc in configs:
        for ds, insts in datasets.items():
            if workers > 1:
                with ThreadPoolExecutor(workers) as ex:
                    results = list(ex.map(lambda i: _run_one(i, models, pc, cfg), insts))
            else:
                results = [_run_one(i, models, pc, cfg) for i in insts]
            ok = [(r, ms) for r, ms in results if r is not None]
            fails = len(results) - len(ok)

            def mean(xs):
                return float(np.mean(xs)) if xs else float("nan")

            rows.append(AblationRow(
                name, ds,
                mean([r.path_length for r, _ in ok]),
                mean([r.time_efficiency for r, _ in ok]),
                mean([r.energy for r, _ in ok]),
                count_params(models, pc),
                training_time(models, pc),
                mean([ms for _, ms in ok]),
                fails,
            ))
    return rows


def rows_to_csv(rows: Iterable[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.formatted())
    return buf.getvalue()


def rows_to_json(rows: Iterable[AblationRow]) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2) + "\n"


def write_report(rows: Sequence[AblationRow], csv_path, json_path) -> None:
    atomic_write(csv_path, rows_to_csv(rows))
    atomic_write(json_path, rows_to_json(rows))
