"""Naive dependency-order traversal.

Walks the instance graph layer by layer (layer = longest-path depth).  Flows
are co-simulated only with flows of the same layer, and everything evaluated
in a layer is final.  A flow issued in a later layer therefore never sees a
contender evaluated earlier, which is exactly the inconsistency the real
scheduler exists to avoid.  Kept for teaching and for regression tests.
"""

from __future__ import annotations

from collections import defaultdict

from .engine import EngineState, Fragment, Stats, _norm
from .fluid import fluid_run
from .lowering import Program


def run_naive(prog: Program) -> EngineState:
    inst = prog.instances
    n = len(inst)
    start, end, arrival = [None] * n, [None] * n, [None] * n
    frags = [[] for _ in range(n)]
    seq = [None] * n
    timer = defaultdict(int)
    nseq = 0
    trace = []
    layers = defaultdict(list)
    for x in inst:
        layers[x.depth].append(x)
    stats = Stats()
    for d in sorted(layers):
        stats.rounds += 1
        flows = {}
        for x in layers[d]:
            a = x.release if x.release is not None else 0
            for q in x.preds:
                a = max(a, end[q])
            arrival[x.idx] = a
        order = sorted(layers[d], key=lambda x: (arrival[x.idx], x.depth, x.iteration, x.base))
        for x in order:
            i, a = x.idx, arrival[x.idx]
            if x.kind == "virtual":
                start[i] = end[i] = a
                trace.append((i, 0, a, a))
            elif x.kind == "exclusive":
                s = max(a, timer[x.point_id])
                start[i], end[i] = s, s + x.duration
                timer[x.point_id] = end[i]
                trace.append((i, 0, start[i], end[i]))
            else:
                flows[i] = (a, x.work, x.resources)
                continue
            seq[i] = nseq
            nseq += 1
        if flows:
            stats.groups += 1
            out = fluid_run(flows, prog.capacities)
            for i in sorted(flows, key=lambda i: (arrival[i], inst[i].base)):
                fs = out[i]
                frags[i] = [Fragment(_norm(s), _norm(e), _norm(w), -1, True) for s, e, w in fs]
                start[i] = frags[i][0].start
                end[i] = _norm(frags[i][-1].end + inst[i].latency)
                for k, f in enumerate(frags[i]):
                    trace.append((i, k, f.start, f.end))
                seq[i] = nseq
                nseq += 1
    st = EngineState(start, end, arrival, frags, seq, stats)
    st.trace = trace
    return st
