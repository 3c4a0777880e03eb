import csv
import json

import numpy as np
import pytest

from hybridplan import cli
from hybridplan.evalkit import CSV_HEADER
from hybridplan.gridworld import Cell, parse_map, parse_scenario, simulate_joint
from hybridplan.planners import CostField, astar, bfs_distance
from hybridplan.training import Diverged


def run(*argv):
    return cli.main([str(a) for a in argv])


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_gen_maps_deterministic_and_solvable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("gen-maps", "--seed", 3, "--count", 4, "--width", 10, "--height", 10, "--density", 0.3,
                   "--out", d) == 0
    assert _files(a) == _files(b)
    for name in [n for n in _files(a) if n.endswith(".map")]:
        m = parse_map((a / name).read_text())
        sc = parse_scenario((a / f"{name}.scen").read_text(), m)
        (s, g), = sc.agents
        assert bfs_distance(m, s, g) == sc.optimal_hint[0]


def test_gen_maps_density_zero_is_open(tmp_path):
    assert run("gen-maps", "--seed", 0, "--count", 2, "--density", 0, "--out", tmp_path) == 0
    assert all(all(parse_map(p.read_text()).cells) for p in tmp_path.glob("*.map"))


@pytest.mark.parametrize("argv", [
    ("gen-maps", "--count", 1),  # no seed
    ("gen-maps", "--seed", 1, "--density", 0.9),
    ("plan", "--map", "/nonexistent.map", "--scen", "/nonexistent.scen"),
])
def test_bad_input_exit_code(argv, tmp_path):
    assert run(*argv, "--out", tmp_path) == 2


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# demo\nseed = 4\ncount = 1\nwidth = 5\nheight = 4\n")
    assert run("gen-maps", "--config", conf, "--width", 6, "--out", tmp_path / "o") == 0
    m = parse_map((tmp_path / "o" / "map_0000.map").read_text())
    assert (m.width, m.height) == (6, 4)


def test_train_gcn_loss_log(tmp_path):
    assert run("train", "gcn", "--seed", 0, "--count", 10, "--epochs", 3, "--out", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "gcn_loss.csv").open()))
    assert rows[0] == ["step", "loss"] and len(rows) - 1 == 30
    assert (tmp_path / "gcn.ckpt").exists()


def test_train_transformer_overfit(tmp_path):
    assert run("train", "transformer", "--seed", 0, "--overfit", "--out", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "transformer_loss.csv").open()))
    assert float(rows[-1][1]) < 0.05


def test_train_gan_needs_gcn(tmp_path):
    assert run("train", "gan", "--seed", 0, "--out", tmp_path) == 2


def test_train_gan_honors_min_iterations(tmp_path):
    conf = tmp_path / "small.conf"
    conf.write_text("hidden = 8\nemb = 4\nnoise_dim = 10\nmax_len = 8\ncandidates = 2\n")
    assert run("train", "gcn", "--seed", 0, "--count", 5, "--epochs", 1, "--out", tmp_path) == 0
    assert run("train", "gan", "--config", conf, "--seed", 0, "--count", 64, "--iterations", 10,
               "--out", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "gan_loss.csv").open()))
    assert len(rows) - 1 == 1800


def test_divergence_exit_code(tmp_path, monkeypatch):
    import hybridplan.training as training

    def boom(*a, **k):
        raise Diverged("loss is nan")

    monkeypatch.setattr(training, "train_gcn", boom)
    assert run("train", "gcn", "--seed", 0, "--out", tmp_path) == 4


def _instance(tmp_path, rows, agents):
    (tmp_path / "m.map").write_text(f"type octile\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n"
                                    + "\n".join(rows) + "\n")
    lines = ["version 1"] + [f"0\tm.map\t{len(rows[0])}\t{len(rows)}\t{s[0]}\t{s[1]}\t{g[0]}\t{g[1]}\t0"
                             for s, g in agents]
    (tmp_path / "m.scen").write_text("\n".join(lines) + "\n")
    return ["--map", tmp_path / "m.map", "--scen", tmp_path / "m.scen", "--out", tmp_path / "out"]


def test_plan_single_agent_matches_astar(tmp_path):
    rows = ["......", ".@@@..", "......"]
    args = _instance(tmp_path, rows, [((0, 0), (5, 2))])
    assert run("plan", "--seed", 0, *args) == 0
    lines = (tmp_path / "out" / "plan.txt").read_text().splitlines()
    m = parse_map((tmp_path / "m.map").read_text())
    expect = astar(CostField.uniform(m), m, Cell(0, 0), Cell(5, 2))
    assert lines == [f"{c.x},{c.y}" for c in expect]
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["timesteps"] == len(expect) and report["agents"][0]["time_efficiency"] == 100.0


def test_plan_multi_agent_conflict_free(tmp_path):
    args = _instance(tmp_path, ["....", "....", "...."], [((0, 0), (3, 2)), ((3, 2), (0, 0)), ((0, 2), (3, 0))])
    assert run("plan", *args) == 0
    rows = [[Cell(*map(int, tok.split(","))) for tok in line.split()]
            for line in (tmp_path / "out" / "plan.txt").read_text().splitlines()]
    paths = [list(col) for col in zip(*rows)]
    assert len(rows) == max(len(p) for p in paths)
    assert simulate_joint(parse_map((tmp_path / "m.map").read_text()), paths).ok


def test_plan_no_joint_plan_exit_code(tmp_path):
    args = _instance(tmp_path, ["..."], [((0, 0), (2, 0)), ((2, 0), (0, 0))])
    assert run("plan", *args) == 3


def test_plan_missing_checkpoint(tmp_path):
    args = _instance(tmp_path, ["..."], [((0, 0), (2, 0))])
    assert run("plan", "--stages", "transformer", "--models", tmp_path / "none", *args) == 2
    assert run("plan", "--stages", "teleport", *args) == 2


def test_ablate_small(tmp_path, untrained_models):
    d = tmp_path / "models"
    d.mkdir()
    untrained_models.transformer.save(d / "transformer.ckpt")
    untrained_models.gcn.save(d / "gcn.ckpt")
    untrained_models.gan.save(d / "gan.ckpt")
    assert run("ablate", "--seed", 1, "--count", 2, "--candidates", 2, "--models", d, "--out", tmp_path / "r") == 0
    rows = list(csv.reader((tmp_path / "r" / "ablation.csv").open()))
    assert tuple(rows[0]) == CSV_HEADER
    assert [r[0] for r in rows[1:]] == [c for c in ("baseline", "+gnn", "+gan", "+gnn+gan") for _ in range(4)]
    assert len(json.loads((tmp_path / "r" / "ablation.json").read_text())) == 16
