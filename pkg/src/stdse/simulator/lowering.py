"""Lower (graph, mapping, hardware) into the flat instance graph the engines run.

Every task becomes one instance per iteration (weights and other producer-less
storage, and tasks flagged ``iterative=False``, get a single shared instance).
Instances come in three flavours:

``exclusive``
    a compute task on a point that runs one task at a time, with a fixed
    duration from the point's evaluator;
``flow``
    a communication sub-task, or a compute task on a ``shared`` point: a
    volume of work drained through one or more shared resources;
``virtual``
    storage tasks, barriers and same-point transfers, which take no time.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from ..coords import Coord, format_coord, sort_key
from ..evaluators import EvaluatorError, get_evaluator
from ..hardware import HardwareModel, SpacePoint, retrieve
from ..mapping import Mapping, MappingError, decompose_edge, edge_route, endpoints
from ..taskgraph import TaskGraph, topological_layers


class LoweringError(ValueError):
    pass


class CycleError(LoweringError):
    """Barriers and dependencies wait on each other: the run can never finish."""


def exact(x):
    """Exact rational for numbers read from YAML (floats go through ``str``)."""
    if isinstance(x, (int, Fraction)):
        return x
    if isinstance(x, float):
        f = Fraction(str(x))
        return int(f) if f.denominator == 1 else f
    return Fraction(x)


@dataclass
class StaticTask:
    name: str
    base: str
    kind: str  # exclusive | flow | virtual
    role: str  # compute | storage | communication | sync
    coord: Optional[Coord]
    point_id: Optional[str]
    duration: int = 0
    work: object = 0
    resources: Tuple = ()
    min_cap: object = 1
    latency: object = 0
    size: int = 0
    single: bool = False


class Instance:
    __slots__ = (
        "idx", "name", "base", "iteration", "kind", "role", "coord", "point_id", "duration", "work",
        "resources", "min_cap", "latency", "size", "preds", "succs", "depth", "release", "desc",
        "sticky_out", "task",
    )

    def __init__(self, st: StaticTask, idx: int, iteration: int):
        self.idx = idx
        self.name = st.name if st.single else f"{st.name}@{iteration}"
        self.base = st.name
        self.task = st.base
        self.iteration = iteration
        self.kind = st.kind
        self.role = st.role
        self.coord = st.coord
        self.point_id = st.point_id
        self.duration = st.duration
        self.work = st.work
        self.resources = st.resources
        self.min_cap = st.min_cap
        self.latency = st.latency
        self.size = st.size
        self.preds: List[int] = []
        self.succs: List[int] = []
        self.depth = 0
        self.release = None
        self.desc = 0
        self.sticky_out = st.role == "storage"

    def __repr__(self):
        return f"Instance({self.name}, {self.kind})"


@dataclass
class Program:
    instances: List[Instance]
    capacities: Dict[Tuple, object]
    points: Dict[str, SpacePoint]
    point_coords: Dict[str, Coord]
    iterations: int
    by_name: Dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.instances)


def _static_tasks(model: HardwareModel, g: TaskGraph, m: Mapping):
    """Template (one iteration) of lowered tasks plus their edges."""
    tasks: Dict[str, StaticTask] = {}
    first: Dict[str, str] = {}
    last: Dict[str, str] = {}
    edges: List[Tuple[str, str]] = []
    capacities: Dict[Tuple, object] = {}
    pred, succ = g.adjacency()

    for t in g.tasks.values():
        single = (not t.iterative) or (t.kind == "storage" and not pred[t.id])
        if t.kind in ("compute", "storage"):
            if t.id not in m.node_map:
                raise LoweringError(f"task {t.id!r} is not placed")
            c = m.node_map[t.id]
            p = retrieve(model, c)
            if t.kind == "storage":
                tasks[t.id] = StaticTask(t.id, t.id, "virtual", "storage", c, p.id, size=t.size, single=single)
            else:
                try:
                    dur = get_evaluator(p.evaluator)(p.params, t.work)
                except EvaluatorError as exc:
                    raise LoweringError(f"task {t.id!r} on {format_coord(c)}: {exc}") from None
                if p.sharing == "shared":
                    res = ((p.id, "pe"),)
                    capacities[res[0]] = 1
                    tasks[t.id] = StaticTask(t.id, t.id, "flow" if dur > 0 else "virtual", "compute", c, p.id,
                                             duration=dur, work=dur, resources=res, min_cap=1, single=single)
                else:
                    tasks[t.id] = StaticTask(t.id, t.id, "exclusive", "compute", c, p.id, duration=dur, single=single)
            first[t.id] = last[t.id] = t.id
        elif t.kind == "sync":
            tasks[t.id] = StaticTask(t.id, t.id, "virtual", "sync", None, None, single=single)
            first[t.id] = last[t.id] = t.id
        else:
            try:
                em = edge_route(m, g, model, t.id)
                subs = decompose_edge(model, t.id, em.path, em.sub_paths, em.domains)
            except MappingError as exc:
                raise LoweringError(str(exc)) from None
            if not subs:
                src, _ = endpoints(g, t.id)
                c = m.node_map[src]
                tasks[t.id] = StaticTask(t.id, t.id, "virtual", "communication", c, retrieve(model, c).id,
                                         single=single)
                first[t.id] = last[t.id] = t.id
                continue
            prev = None
            for s in subs:
                bw = exact(s.point.topology.link_bandwidth)
                for r in s.links:
                    capacities[r] = bw
                tasks[s.id] = StaticTask(
                    s.id, t.id, "flow", "communication", s.comm_coord, s.point.id,
                    work=t.volume, resources=s.links, min_cap=bw,
                    latency=exact(len(s.hops) * exact(s.point.topology.hop_latency)), single=single,
                )
                if prev:
                    edges.append((prev, s.id))
                prev = s.id
            first[t.id], last[t.id] = subs[0].id, subs[-1].id
    for (s, d) in g.deps:
        edges.append((last[s], first[d]))
    for a, b in m.order_deps:
        if a in last and b in first:
            edges.append((last[a], first[b]))
    _lower_barriers(m, g, tasks, first, last, edges)
    return tasks, edges, capacities


def _ancestors(edges, names):
    preds = defaultdict(list)
    for a, b in edges:
        preds[b].append(a)
    out, stack = set(), list(names)
    while stack:
        x = stack.pop()
        for p in preds[x]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def _lower_barriers(m: Mapping, g: TaskGraph, tasks, first, last, edges):
    if not m.sync_tasks:
        return
    on_point = defaultdict(list)
    for st in tasks.values():
        if st.coord is not None and st.role != "sync":
            on_point[st.coord].append(st.name)

    def located(task_ids, c):
        out = set()
        for t in task_ids:
            if t in tasks and tasks[t].coord == c:
                out.add(t)
            elif t in first:
                out.update(n for n in (first[t], last[t]) if tasks[n].coord == c)
        return out

    order: Dict[str, list] = {}
    for rec in m.sync_tasks:
        order.setdefault(rec.sync_id, []).append(rec)
    claimed = defaultdict(set)
    for sid, recs in order.items():
        bname = f"sync:{sid}"
        tasks[bname] = StaticTask(bname, bname, "virtual", "sync", None, None)
        befores = set()
        for rec in recs:
            befores |= located(rec.before, rec.coord)
        anc = _ancestors(edges, befores) | befores
        for rec in recs:
            b = located(rec.before, rec.coord)
            for t in sorted(b):
                edges.append((t, bname))
            if rec.after is not None:
                post = located(rec.after, rec.coord)
            else:
                earlier = claimed[rec.coord]
                blocked = anc | earlier | _ancestors(edges, earlier)
                post = {t for t in on_point.get(rec.coord, ()) if t not in blocked and tasks[t].role != "storage"}
            for t in sorted(post):
                edges.append((bname, t))
            claimed[rec.coord] |= b


def lower(model: HardwareModel, g: TaskGraph, m: Mapping, iterations: int = 1,
          external_inputs: Optional[Sequence] = None) -> Program:
    if iterations < 1:
        raise LoweringError("iterations must be >= 1")
    rel = [exact(x) for x in (external_inputs or [0] * iterations)]
    if len(rel) < iterations:
        raise LoweringError(f"{iterations} iterations need {iterations} external input timestamps")
    tasks, edges, capacities = _static_tasks(model, g, m)

    tg = TaskGraph()
    from ..taskgraph import Task

    for name in tasks:
        tg.add_task(Task(name, "sync", sync_id=name))
    for a, b in dict.fromkeys(edges):
        if a != b:
            tg.add_dependency(a, b)
    cyc = tg.find_cycle()
    if cyc:
        raise CycleError("lowered graph has a dependency cycle (deadlock): " + " -> ".join(cyc))
    layers = topological_layers(tg)
    order = [n for layer in layers for n in layer]
    spred, ssucc = tg.adjacency()

    # single-instance tasks may only depend on other single-instance tasks
    for n in order:
        if tasks[n].single and any(not tasks[p].single for p in spred[n]):
            tasks[n].single = False

    instances: List[Instance] = []
    ids: Dict[Tuple[str, int], int] = {}
    for k in range(iterations):
        for n in order:
            st = tasks[n]
            if st.single and k > 0:
                ids[(n, k)] = ids[(n, 0)]
                continue
            inst = Instance(st, len(instances), k)
            ids[(n, k)] = inst.idx
            instances.append(inst)
    for inst in instances:
        for p in spred[inst.base]:
            inst.preds.append(ids[(p, inst.iteration)])
    for inst in instances:
        if tasks[inst.base].single:
            # shared instance feeds every iteration of its consumers
            for k in range(1, iterations):
                for s in ssucc[inst.base]:
                    j = ids[(s, k)]
                    if inst.idx not in instances[j].preds:
                        instances[j].preds.append(inst.idx)
    for inst in instances:
        inst.preds = sorted(set(inst.preds))
        for p in inst.preds:
            instances[p].succs.append(inst.idx)
        if not inst.preds:
            inst.release = rel[inst.iteration]
    # depth = longest path from a source; instances are created iteration-major
    # in topological order, so a single forward sweep per iteration suffices
    for inst in sorted(instances, key=lambda i: (i.iteration, order.index(i.base))):
        inst.depth = max((instances[p].depth + 1 for p in inst.preds), default=0)
    topo = sorted(instances, key=lambda i: (i.depth, i.iteration, i.idx))
    for inst in reversed(topo):
        mask = 0
        for s in inst.succs:
            mask |= (1 << s) | instances[s].desc
        inst.desc = mask
    points = {p.id: p for c, p in model._points}
    prog = Program(
        instances=instances,
        capacities=capacities,
        points=points,
        point_coords={p.id: c for c, p in model._points},
        iterations=iterations,
    )
    prog.by_name = {i.name: i.idx for i in instances}
    prog.topo = [i.idx for i in topo]
    return prog
