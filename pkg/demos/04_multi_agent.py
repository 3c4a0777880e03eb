"""
Several robots on one map
=========================

Prioritized planning: agents plan in order, each one avoiding the cells
and swaps that earlier agents have reserved in space-time. The joint plan
is then replayed to confirm there are no conflicts.
"""

# %%
import numpy as np

from hybridplan.gridworld import GridMap, simulate_joint
from hybridplan.instances import random_map, random_scenario
from hybridplan.planners import joint_positions, prioritized_multi

rng = np.random.default_rng(4)
m = random_map(rng, 10, 8, 0.15)
sc = random_scenario(rng, m, 5)
for i, (s, g) in enumerate(sc.agents):
    print(f"agent {i}: {tuple(s)} -> {tuple(g)}")

# %%
paths = prioritized_multi(m, sc)
report = simulate_joint(m, paths)
print("vertex conflicts", len(report.vertex_conflicts), "swap conflicts", len(report.swap_conflicts))


# %%
# Replay a few timesteps. Digits are agents, '@' walls.
def frame(m: GridMap, cells) -> str:
    rows = [["." if m.passable[y, x] else "@" for x in range(m.width)] for y in range(m.height)]
    for i, c in enumerate(cells):
        rows[c.y][c.x] = str(i)
    return "\n".join("".join(r) for r in rows)


steps = joint_positions(paths)
for t in (0, len(steps) // 2, len(steps) - 1):
    print(f"t = {t}")
    print(frame(m, steps[t]))
