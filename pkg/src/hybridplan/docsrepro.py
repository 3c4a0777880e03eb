"""Checked-in fixtures and the generator that must reproduce them byte for byte.

Every expected value in ``expected.tsv`` carries a provenance tag:
``[TRIVIAL]`` for hand-checkable values, ``[DERIVED]`` for values computed
by an independent oracle (BFS here, never the planner under test).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .evalkit import MetricsConfig, energy, path_length, time_efficiency, time_planned
from .gridworld import Cell, GridMap, Scenario, render_map, render_scenario
from .instances import random_instance
from .planners.search import bfs_distance

FIXTURE_SEED = 7
FIXTURE_DIR = "fixtures"


class FixtureDrift(AssertionError):
    def __init__(self, files: list[str]):
        super().__init__(f"fixtures differ from regeneration: {', '.join(files)}")
        self.files = files


def _wall_gap() -> GridMap:
    return GridMap.from_rows([".....", ".....", "@@.@@", ".....", "....."])


def _corridor() -> GridMap:
    return GridMap.from_rows(["....."])


def _row(key: str, value, tag: str, note: str) -> str:
    return f"{key}\t{value}\t[{tag}] {note}\n"


def regenerate_fixtures(seed: int = FIXTURE_SEED) -> dict[str, str]:
    """Rebuild every fixture file as ``{file name: text}``."""
    files: dict[str, str] = {}
    expected = ["key\tvalue\tprovenance\n"]

    instances = [
        ("corridor1x5", _corridor(), Cell(0, 0), Cell(4, 0), "TRIVIAL", "straight line"),
        ("wallgap5x5", _wall_gap(), Cell(0, 0), Cell(0, 4), "DERIVED", "BFS oracle over all cells"),
        ("open10x10", GridMap.open(10, 10), Cell(0, 0), Cell(9, 9), "TRIVIAL", "Manhattan distance on open grid"),
    ]
    rng = np.random.default_rng(seed)
    for k in range(3):
        inst = random_instance(rng, 8, 8, 0.25)
        instances.append((f"random8_{k}", inst.map, inst.start, inst.goal, "DERIVED", f"BFS oracle, seed {seed}"))

    for name, m, s, g, tag, note in instances:
        d = bfs_distance(m, s, g)
        files[f"{name}.map"] = render_map(m)
        files[f"{name}.map.scen"] = render_scenario(Scenario(((s, g),), (float(d),)), m, f"{name}.map")
        expected.append(_row(f"{name}.astar_cost", d, tag, note))
        expected.append(_row(f"{name}.time_efficiency_at_optimum", f"{time_efficiency(d, d):.2f}", "TRIVIAL",
                             "planned == optimal"))

    c = MetricsConfig()
    line = [Cell(i, 0) for i in range(5)]
    waity = [Cell(0, 0), Cell(1, 0), Cell(1, 0), Cell(2, 0)]
    expected += [
        _row("path_length.single_node", path_length([Cell(0, 0)]), "TRIVIAL", "empty sum"),
        _row("path_length.four_moves", path_length(line), "TRIVIAL", "unit steps"),
        _row("path_length.move_wait_move", path_length(waity), "TRIVIAL", "Wait contributes 0"),
        _row("time_planned.four_moves", time_planned(line, c), "TRIVIAL", "4 steps x 1 s"),
        _row("time_planned.three_moves_two_waits_step2",
             time_planned(line[:4] + [line[3], line[3]], MetricsConfig(step_time=2.0)), "TRIVIAL", "5 steps x 2 s"),
        _row("time_efficiency.double", f"{time_efficiency(8.0, 4.0):.2f}", "TRIVIAL", "ratio"),
        _row("energy.2W_5s", energy(5.0, MetricsConfig(power=2.0)), "TRIVIAL", "formula"),
        _row("energy.default_four_steps", energy(time_planned(line, c), c), "TRIVIAL", "defaults"),
    ]
    files["expected.tsv"] = "".join(expected)
    return files


def fixture_root() -> Path:
    return Path(str(resources.files("hybridplan") / FIXTURE_DIR))


def load_expected(root: Path | None = None) -> dict[str, str]:
    root = root or fixture_root()
    out = {}
    for line in (root / "expected.tsv").read_text().splitlines()[1:]:
        key, value, _ = line.split("\t", 2)
        out[key] = value
    return out


def check_fixtures(seed: int = FIXTURE_SEED, root: Path | None = None) -> None:
    """Raise :class:`FixtureDrift` unless regeneration matches the checked-in files exactly."""
    root = root or fixture_root()
    fresh = regenerate_fixtures(seed)
    bad = []
    for name, text in fresh.items():
        p = root / name
        if not p.exists() or p.read_text() != text:
            bad.append(name)
    extra = sorted(p.name for p in root.iterdir() if p.is_file() and p.name not in fresh and p.name != "README")
    bad += extra
    if bad:
        raise FixtureDrift(sorted(bad))


def write_fixtures(root: Path, seed: int = FIXTURE_SEED) -> list[str]:
    root.mkdir(parents=True, exist_ok=True)
    out = regenerate_fixtures(seed)
    for name, text in out.items():
        (root / name).write_text(text)
    return sorted(out)


if __name__ == "__main__":
    import sys

    target = Path(sys.argv[1]) if len(sys.argv) > 1 else fixture_root()
    print("\n".join(write_fixtures(target)))
