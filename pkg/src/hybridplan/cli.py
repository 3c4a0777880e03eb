"""Command-line entry point: ``hpl gen-maps | train | plan | ablate``.

Settings come from an optional flat ``key=value`` config file; command-line
flags override it. Exit codes: 0 success, 2 bad input, 3 planning failure,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .gridworld import Cell, GridMap, MapFormatError, Scenario, ScenarioError, parse_map, parse_scenario, render_map, \
    render_scenario
from .instances import ExhaustedRetries, Instance, random_instance, random_scenario
from .planners.search import CostField, astar_search

EXIT_OK, EXIT_BAD_INPUT, EXIT_PLAN_FAILED, EXIT_DIVERGED = 0, 2, 3, 4
STAGES = ("transformer", "gnn", "gan")
CHECKPOINTS = {"transformer": "transformer.ckpt", "gcn": "gcn.ckpt", "gan": "gan.ckpt"}


class BadInput(Exception):
    pass


def read_config(path) -> dict[str, str]:
    """Flat key=value file; blank lines and '#' comments ignored. Dashes in keys become underscores."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadInput(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def merged(args: argparse.Namespace) -> dict[str, str]:
    """Config-file values overlaid by any flag the user actually set."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "func", "command"):
            cfg[k] = str(v) if not isinstance(v, str) else v
    return cfg


def _get(cfg, key, kind=str, default=None):
    if key not in cfg:
        return default
    try:
        if kind is bool:
            return cfg[key].lower() in ("1", "true", "yes", "on")
        return kind(cfg[key])
    except ValueError:
        raise BadInput(f"bad value for {key}: {cfg[key]!r}") from None


def _seed(cfg) -> int:
    seed = _get(cfg, "seed", int)
    if seed is None:
        raise BadInput("--seed (or seed= in the config file) is required")
    return seed


def _atomic_text(path: Path, text: str) -> None:
    from .tensor_core.checkpoint import atomic_write

    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(path, text)


def _override(obj, cfg, prefix=""):
    """Copy matching keys from ``cfg`` onto a dataclass instance."""
    kw = {}
    for f in fields(obj):
        key = prefix + f.name
        if key in cfg:
            cur = getattr(obj, f.name)
            kw[f.name] = _get(cfg, key, type(cur) if cur is not None else str)
    return replace(obj, **kw) if kw else obj


# ----------------------------------------------------------------------------
# gen-maps


def cmd_gen_maps(cfg) -> int:
    seed = _seed(cfg)
    count = _get(cfg, "count", int, 10)
    width = _get(cfg, "width", int, 16)
    height = _get(cfg, "height", int, 16)
    density = _get(cfg, "density", float, 0.2)
    agents = _get(cfg, "agents", int, 1)
    out = Path(_get(cfg, "out", str, "maps"))
    if not 0.0 <= density <= 0.45:
        raise BadInput("density must lie in [0, 0.45]")
    rng = np.random.default_rng(seed)
    for k in range(count):
        inst = random_instance(rng, width, height, density)
        m = inst.map
        if agents == 1:
            agent_pairs = ((inst.start, inst.goal),)
        else:
            agent_pairs = random_scenario(rng, m, agents).agents
        hints = tuple(astar_search(CostField.uniform(m), m, s, g).cost for s, g in agent_pairs)
        name = f"map_{k:04d}.map"
        _atomic_text(out / name, render_map(m))
        _atomic_text(out / f"{name}.scen", render_scenario(Scenario(agent_pairs, hints, name), m, name))
    print(f"wrote {count} maps to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# train


def _loss_csv(losses) -> str:
    return "step,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(losses))


def _train_instances(cfg, rng) -> list[Instance]:
    w = _get(cfg, "width", int, 8)
    h = _get(cfg, "height", int, 8)
    d = _get(cfg, "density", float, 0.10)
    n = _get(cfg, "count", int, 200)
    return [random_instance(rng, w, h, d) for _ in range(n)]


def cmd_train(cfg) -> int:
    from .gcn_encoder import GcnParams
    from .path_gan import GanConfig
    from .training import TransformerTraining, empty_map_instances, train_gcn, train_path_gan, train_transformer
    from .transformer_planner import PlannerConfig

    stage = cfg["stage"]
    seed = _seed(cfg)
    out = Path(_get(cfg, "out", str, "models"))
    models_dir = Path(_get(cfg, "models", str, str(out)))
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / CHECKPOINTS[stage]

    if stage == "transformer":
        recipe = TransformerTraining()
        if _get(cfg, "overfit", bool, False):
            recipe = TransformerTraining(n_maps=1, epochs=300, batch=1, final_lr=1e-3, augment=False)
        recipe = _override(recipe, cfg)
        model = train_transformer(recipe, seed=seed, config=_override(PlannerConfig(), cfg))
    elif stage == "gcn":
        rng = np.random.default_rng(seed)
        model = train_gcn(_train_instances(cfg, rng), epochs=_get(cfg, "epochs", int, 20),
                          lr=_get(cfg, "lr", float, 1e-2), seed=seed)
    else:
        gcn_path = models_dir / CHECKPOINTS["gcn"]
        if not gcn_path.exists():
            raise BadInput(f"GAN conditioning needs a trained GCN at {gcn_path}")
        gcn = GcnParams.load(gcn_path)
        gc = _override(GanConfig(), cfg)
        iterations = max(_get(cfg, "iterations", int, gc.min_iterations), gc.min_iterations)
        rng = np.random.default_rng(seed)
        insts = empty_map_instances(rng, _get(cfg, "count", int, 400), _get(cfg, "width", int, 8),
                                    _get(cfg, "height", int, 8))
        model = train_path_gan(insts, gcn, gc, seed=seed, iterations=iterations)
    losses = model.g_losses if stage == "gan" else model.loss_curve
    model.save(ckpt)
    _atomic_text(out / f"{stage}_loss.csv", _loss_csv(losses))
    print(f"{stage}: {len(losses)} steps, final loss {losses[-1]:.4f}, {model.training_time:.1f}s -> {ckpt}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# plan / ablate


def pipeline_config(cfg):
    from .planners.pipeline import PipelineConfig

    raw = _get(cfg, "stages", str, "")
    stages = [s.strip() for s in raw.split(",") if s.strip() and s.strip() != "none"]
    for s in stages:
        if s not in STAGES:
            raise BadInput(f"unknown stage {s!r}; choose from {','.join(STAGES)}")
    try:
        return PipelineConfig("transformer" in stages, "gnn" in stages, "gan" in stages,
                              lam=_get(cfg, "lambda", float, 0.5), candidates=_get(cfg, "candidates", int, 8),
                              fallback=_get(cfg, "fallback", str, "astar"), seed=_get(cfg, "seed", int, 0))
    except ValueError as e:
        raise BadInput(str(e)) from None


def metrics_config(cfg):
    from .evalkit import MetricsConfig

    try:
        return MetricsConfig(_get(cfg, "power", float, 1.0), _get(cfg, "step_time", float, 1.0))
    except ValueError as e:
        raise BadInput(str(e)) from None


def load_models(cfg, pc):
    from .gcn_encoder import GcnParams
    from .path_gan import GanModel
    from .planners.pipeline import Models
    from .transformer_planner import TransformerParams

    d = Path(_get(cfg, "models", str, "models"))
    need = {"transformer": pc.use_transformer, "gcn": pc.use_gnn or pc.use_gan, "gan": pc.use_gan}
    loaders = {"transformer": TransformerParams.load, "gcn": GcnParams.load, "gan": GanModel.load}
    got = {}
    for stage, wanted in need.items():
        if not wanted:
            continue
        p = d / CHECKPOINTS[stage]
        if not p.exists():
            raise BadInput(f"missing checkpoint {p}")
        got[stage] = loaders[stage](p)
    return Models(**got)


def _read_instance(cfg) -> tuple[GridMap, Scenario]:
    if "map" not in cfg or "scen" not in cfg:
        raise BadInput("--map and --scen are required")
    m = parse_map(Path(cfg["map"]).read_text())
    sc = parse_scenario(Path(cfg["scen"]).read_text(), m)
    sc.validate(m)
    return m, sc


def cmd_plan(cfg) -> int:
    from .evalkit import evaluate_path
    from .planners.multi import joint_positions, prioritized_multi
    from .planners.search import bfs_distance

    m, sc = _read_instance(cfg)
    pc = pipeline_config(cfg)
    mc = metrics_config(cfg)
    models = load_models(cfg, pc)
    out = Path(_get(cfg, "out", str, "plan_out"))
    paths = prioritized_multi(m, sc, pc, models)
    lines = [" ".join(f"{c.x},{c.y}" for c in row) for row in joint_positions(paths)]
    agents = []
    for (s, g), p in zip(sc.agents, paths):
        r = evaluate_path(p, bfs_distance(m, s, g), mc)
        agents.append({"start": list(s), "goal": list(g), "steps": len(p) - 1, "path_length": r.path_length,
                       "time_efficiency": r.time_efficiency, "energy": r.energy})
    report = {"stages": pc.name, "agents": agents, "timesteps": len(lines),
              "total_energy": sum(a["energy"] for a in agents)}
    _atomic_text(out / "plan.txt", "\n".join(lines) + "\n")
    _atomic_text(out / "report.json", json.dumps(report, indent=2) + "\n")
    print(f"planned {len(paths)} agents over {len(lines)} timesteps -> {out}")
    return EXIT_OK


def ablation_datasets(cfg, seed: int) -> dict[str, list[Instance]]:
    if "map" in cfg and "scen" in cfg:
        m, sc = _read_instance(cfg)
        return {Path(cfg["map"]).name: [Instance(m, s, g) for s, g in sc.agents]}
    n = _get(cfg, "count", int, 20)
    rng = np.random.default_rng(seed)
    empty = GridMap.open(8, 8)
    cells = empty.passable_cells()
    open_insts = []
    for _ in range(n):
        i, j = rng.choice(len(cells), 2, replace=False)
        open_insts.append(Instance(empty, cells[i], cells[j]))
    return {
        "open-8": open_insts,
        "random-8-10": [random_instance(rng, 8, 8, 0.10) for _ in range(n)],
        "random-8-25": [random_instance(rng, 8, 8, 0.25) for _ in range(n)],
        "random-16-20": [random_instance(rng, 16, 16, 0.20) for _ in range(n)],
    }


def cmd_ablate(cfg) -> int:
    from .evalkit import ablation_configs, run_ablation, write_report
    from .planners.pipeline import PipelineConfig

    seed = _seed(cfg)
    mc = metrics_config(cfg)
    configs = ablation_configs(lam=_get(cfg, "lambda", float, 0.5), candidates=_get(cfg, "candidates", int, 8),
                               fallback=_get(cfg, "fallback", str, "astar"), seed=seed)
    models = load_models(cfg, PipelineConfig(True, True, True))
    out = Path(_get(cfg, "out", str, "ablation_out"))
    rows = run_ablation(ablation_datasets(cfg, seed), configs, models, mc)
    out.mkdir(parents=True, exist_ok=True)
    write_report(rows, out / "ablation.csv", out / "ablation.json")
    print(f"{len(rows)} rows -> {out / 'ablation.csv'}")
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpl", description="Grid path planning with Transformer, GCN and GAN stages.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_help="random seed"):
        p.add_argument("--config", help="key=value file; flags override it")
        p.add_argument("--seed", type=int, help=seed_help)
        p.add_argument("--out", help="output directory")

    def pipeline_flags(p):
        p.add_argument("--models", help="directory with transformer.ckpt, gcn.ckpt, gan.ckpt")
        p.add_argument("--stages", help="comma list from transformer,gnn,gan (empty: A* only)")
        p.add_argument("--lambda", dest="lambda", type=float, help="GCN cost bias weight")
        p.add_argument("--candidates", type=int, help="GAN candidates per query")
        p.add_argument("--fallback", choices=("astar", "repair"))
        p.add_argument("--power", type=float, help="robot power in watts")
        p.add_argument("--step-time", dest="step_time", type=float, help="seconds per timestep")

    p = sub.add_parser("gen-maps", help="write random movingai maps and scenarios")
    common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--agents", type=int)
    p.set_defaults(func=cmd_gen_maps)

    p = sub.add_parser("train", help="train one stage, write checkpoint and loss CSV")
    p.add_argument("stage", choices=("transformer", "gcn", "gan"))
    common(p)
    p.add_argument("--models", help="where to find the GCN checkpoint for GAN conditioning (default: --out)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--count", type=int, help="training instances (gcn, gan)")
    p.add_argument("--iterations", type=int, help="GAN steps (never below min_iterations)")
    p.add_argument("--overfit", action="store_true", default=None, help="transformer: fit one instance")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="plan every agent of a scenario")
    common(p)
    p.add_argument("--map")
    p.add_argument("--scen")
    pipeline_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("ablate", help="baseline / +gnn / +gan / +gnn+gan report")
    common(p)
    p.add_argument("--map")
    p.add_argument("--scen")
    p.add_argument("--count", type=int, help="instances per generated dataset")
    pipeline_flags(p)
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None) -> int:
    from .planners.multi import NoJointPlan
    from .planners.search import NoPath
    from .tensor_core.checkpoint import CheckpointError
    from .training import Diverged

    args = build_parser().parse_args(argv)
    try:
        cfg = merged(args)
        if "threads" in cfg and "HPL_THREADS" not in os.environ:
            os.environ["HPL_THREADS"] = cfg["threads"]
        return args.func(cfg)
    except (BadInput, MapFormatError, ScenarioError, CheckpointError, ExhaustedRetries, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (NoJointPlan, NoPath) as e:
        print(f"planning failed: {e}", file=sys.stderr)
        return EXIT_PLAN_FAILED
    except Diverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
