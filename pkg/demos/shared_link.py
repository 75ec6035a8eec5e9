"""Two transfers leave the same core over one link.

Walks the seven-task fixture twice: once in plain dependency order, which
lets each transfer run at full bandwidth as if it had the link to itself,
and once with contention handled, where the transfers split the link and
the later hop of F is truncated when C shows up.

    python demos/shared_link.py
"""

from stdse.fixtures import shared_link_example
from stdse.simulator import simulate


def show(title, res):
    print(title)
    for name, (s, e) in sorted(res.task_times().items(), key=lambda kv: (kv[1][0], kv[0])):
        print(f"  {name:2s} {str(s):>4s} .. {str(e):>4s}")
    print(f"  makespan {res.makespan}")
    for v in res.violations:
        print(f"  ! {v}")


model, g, m = shared_link_example()
show("naive traversal", simulate(model, g, m, naive=True))
print()
res = simulate(model, g, m)
show("with contention", res)
print()
print("fragments of F:")
for s, e, w in res.tasks["F#0@0"].fragments + res.tasks["F#1@0"].fragments:
    print(f"  [{s}, {e}) work {w}")
