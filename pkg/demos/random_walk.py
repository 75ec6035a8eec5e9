"""Greedy random walk over placements of a transformer layer.

Each step moves one compute task to a random core, re-routes, simulates
and keeps the move when the makespan does not get worse.  The kept
primitive sequence is then replayed from scratch to show that the lineage
alone reproduces the final mapping.

    python demos/random_walk.py --seed 3 --steps 60
"""

import argparse
import random

from stdse.fixtures import SPREAD_SCRIPT, two_level_mesh
from stdse.hardware import build, enumerate_points
from stdse.primitives import auto_route, initial_state, place, replay, run_script
from stdse.simulator import simulate
from stdse.taskgraph import transformer_graph

ap = argparse.ArgumentParser()
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--steps", type=int, default=60)
ap.add_argument("--layers", type=int, default=2)
args = ap.parse_args()

rng = random.Random(args.seed)
model = build(two_level_mesh())
g = transformer_graph(64, 32, layers=args.layers)
cores = [c for c, p in enumerate_points(model, "compute")]
compute = sorted(t for t, task in g.tasks.items() if task.kind == "compute")


def makespan(s):
    return simulate(model, s.graph, s.mapping).makespan


s = run_script(SPREAD_SCRIPT, initial_state(g, model), "<spread>")
best = makespan(s)
print(f"round-robin start: makespan {best}")
for step in range(args.steps):
    t = rng.choice(compute)
    trial = auto_route(place(s, t, rng.choice(cores)))
    ms = makespan(trial)
    if ms <= best:
        if ms < best:
            print(f"  step {step:3d}: {t} -> makespan {ms}")
        s, best = trial, ms

print(f"final makespan {best} after {len(s.lineage)} primitives")
again = replay(s.lineage, g, model)
assert again == s and makespan(again) == best
print("replayed lineage reproduces the mapping")
