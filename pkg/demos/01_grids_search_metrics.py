"""
Grids, search and the path metrics
==================================

A walk through the non-learned half of the library: parse a movingai map,
search it with Dijkstra and A*, check both against breadth-first search,
then score the path.

Run with ``python3 demos/01_grids_search_metrics.py``.
"""

# %%
# A map is plain movingai text. '.' is free, '@' is a wall.
import numpy as np

from hybridplan.evalkit import MetricsConfig, evaluate_path
from hybridplan.gridworld import Cell, parse_map, render_map
from hybridplan.planners import CostField, astar_search, bfs_distance, dijkstra_search

text = """type octile
height 5
width 7
map
.......
.@@@@@.
.......
@@@@@.@
.......
"""
m = parse_map(text)
print(render_map(m))

# %%
# Uniform costs: every step costs 1, so all three searches must agree.
start, goal = Cell(0, 0), Cell(0, 4)
field = CostField.uniform(m)
a = astar_search(field, m, start, goal)
d = dijkstra_search(field, m, start, goal)
print("A* cost", a.cost, "expanded", a.expansions)
print("Dijkstra cost", d.cost, "expanded", d.expansions)
print("BFS distance", bfs_distance(m, start, goal))

# %%
# Draw the path over the map.
rows = [list(r) for r in render_map(m).splitlines()[4:]]
for c in a.path:
    rows[c.y][c.x] = "*"
print("\n".join("".join(r) for r in rows))

# %%
# Non-uniform costs (all >= 1) keep Manhattan distance admissible, so A*
# still matches Dijkstra exactly.
rng = np.random.default_rng(0)
heavy = CostField(1.0 + 4.0 * rng.random((m.height, m.width)))
print("weighted A*", round(astar_search(heavy, m, start, goal).cost, 6),
      "weighted Dijkstra", round(dijkstra_search(heavy, m, start, goal).cost, 6))

# %%
# Metrics treat one grid step as one time unit. Energy is power x time.
report = evaluate_path(a.path, bfs_distance(m, start, goal), MetricsConfig(power=2.0, step_time=0.5))
print(report)

# a detour with two waits is slower, and efficiency drops below 100
detour = a.path[:3] + [a.path[2], a.path[2]] + a.path[3:]
print(evaluate_path(detour, bfs_distance(m, start, goal)))
