"""240 hardware configurations of a two-level mesh, one simulation each.

Varies package and chiplet link bandwidth, core throughput and core local
bandwidth for a fixed round-robin mapping of ten transformer layers, then
lists the fastest points and how much each axis matters.

    python demos/design_sweep.py [--jobs 4] [--csv rows.csv]
"""

import argparse
import time
from collections import defaultdict

from stdse.fixtures import DESK_AXES, SPREAD_SCRIPT, desk_workload, two_level_mesh
from stdse.sweep import SweepSpec, rows_to_csv, run_sweep

ap = argparse.ArgumentParser()
ap.add_argument("--jobs", type=int, default=1)
ap.add_argument("--csv")
args = ap.parse_args()

spec = SweepSpec(base=two_level_mesh(), workload=desk_workload(), axes=DESK_AXES, script=SPREAD_SCRIPT)
t0 = time.perf_counter()
rows = run_sweep(spec, jobs=args.jobs)
dt = time.perf_counter() - t0
ok = [r for r in rows if r["status"] == "ok"]
print(f"{len(rows)} points, {len(ok)} ok, {dt:.1f}s")
if args.csv:
    with open(args.csv, "w") as fh:
        fh.write(rows_to_csv(spec, rows))

names = [p for p, _ in spec.axes]
short = dict(zip(names, ["nop_bw", "noc_bw", "core_tput", "core_local_bw"]))
print("\nfastest five")
for r in sorted(ok, key=lambda r: r["makespan"])[:5]:
    print("  " + "  ".join(f"{short[p]}={r[p]}" for p in names) + f"  makespan={r['makespan']}")

print("\nmean makespan per axis value")
for p in names:
    acc = defaultdict(list)
    for r in ok:
        acc[r[p]].append(r["makespan"])
    cells = "  ".join(f"{v}:{sum(ms) / len(ms):.0f}" for v, ms in acc.items())
    print(f"  {short[p]:14s} {cells}")
