"""Tensor-granularity task graphs.

Compute and storage tasks are nodes; a communication task is a node with
exactly one producer and one consumer, standing for the edge between them.
Sync tasks carry only a ``sync_id``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

from .diagnostics import Diagnostic
from .textio import FormatError, LocDict, dump_yaml, load_yaml, where

TASK_KINDS = ("compute", "storage", "communication", "sync")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    id: str
    kind: str
    ops: int = 0
    bytes: int = 0
    size: int = 0
    volume: int = 0
    sync_id: Optional[str] = None
    iterative: bool = True

    @property
    def work(self) -> Dict[str, int]:
        if self.kind == "compute":
            return {"ops": self.ops, "bytes": self.bytes}
        if self.kind == "storage":
            return {"size": self.size}
        if self.kind == "communication":
            return {"volume": self.volume}
        return {}


@dataclass(frozen=True)
class Dependency:
    src: str
    dst: str
    carried_bytes: int = 0


class TaskGraph:
    def __init__(self, tasks: Iterable[Task] = (), deps: Iterable[Dependency] = ()):
        self.tasks: Dict[str, Task] = {}
        self.deps: Dict[Tuple[str, str], Dependency] = {}
        for t in tasks:
            self.add_task(t)
        for d in deps:
            self.add_dependency(d)

    # construction -------------------------------------------------------

    def add_task(self, task: Task = None, **kw) -> Task:
        if task is None:
            task = Task(**kw)
        if task.id in self.tasks:
            raise GraphError(f"duplicate task id {task.id!r}")
        if task.kind not in TASK_KINDS:
            raise GraphError(f"task {task.id!r}: unknown kind {task.kind!r}")
        self.tasks[task.id] = task
        return task

    def add_dependency(self, src, dst=None, carried_bytes: int = 0) -> Dependency:
        dep = src if isinstance(src, Dependency) else Dependency(src, dst, carried_bytes)
        for end in (dep.src, dep.dst):
            if end not in self.tasks:
                raise GraphError(f"dependency {dep.src}->{dep.dst}: dangling endpoint {end!r}")
        if (dep.src, dep.dst) in self.deps:
            raise GraphError(f"duplicate dependency {dep.src}->{dep.dst}")
        self.deps[(dep.src, dep.dst)] = dep
        return dep

    def copy(self) -> "TaskGraph":
        g = TaskGraph()
        g.tasks = dict(self.tasks)
        g.deps = dict(self.deps)
        return g

    def __eq__(self, other) -> bool:
        return isinstance(other, TaskGraph) and self.tasks == other.tasks and self.deps == other.deps

    def __len__(self) -> int:
        return len(self.tasks)

    # queries --------------------------------------------------------------

    def preds(self, tid: str) -> List[str]:
        return [s for (s, d) in self.deps if d == tid]

    def succs(self, tid: str) -> List[str]:
        return [d for (s, d) in self.deps if s == tid]

    def adjacency(self):
        pred, succ = defaultdict(list), defaultdict(list)
        for s, d in self.deps:
            succ[s].append(d)
            pred[d].append(s)
        return pred, succ

    @property
    def inputs(self) -> List[str]:
        has_pred = {d for _, d in self.deps}
        return [t for t in self.tasks if t not in has_pred]

    def find_cycle(self) -> Optional[List[str]]:
        _, succ = self.adjacency()
        color: Dict[str, int] = {}
        stack: List[str] = []

        def dfs(u):
            color[u] = 1
            stack.append(u)
            for v in sorted(succ[u]):
                if color.get(v) == 1:
                    return stack[stack.index(v):] + [v]
                if v not in color:
                    found = dfs(v)
                    if found:
                        return found
            color[u] = 2
            stack.pop()
            return None

        for t in sorted(self.tasks):
            if t not in color:
                found = dfs(t)
                if found:
                    return found
        return None


def validate_graph(g: TaskGraph) -> List[Diagnostic]:
    diags = []
    pred, succ = g.adjacency()
    for t in g.tasks.values():
        if min(t.ops, t.bytes, t.size, t.volume) < 0:
            diags.append(Diagnostic("work", "negative work quantity", t.id))
        if t.kind == "communication":
            if t.volume <= 0:
                diags.append(Diagnostic("work", "communication volume must be > 0", t.id))
            if len(pred[t.id]) != 1 or len(succ[t.id]) != 1:
                diags.append(Diagnostic(
                    "comm-endpoints",
                    f"communication task needs one producer and one consumer, has {len(pred[t.id])}/{len(succ[t.id])}",
                    t.id))
            for other in pred[t.id] + succ[t.id]:
                if g.tasks[other].kind == "communication":
                    diags.append(Diagnostic("comm-endpoints", f"endpoint {other!r} is itself a communication task", t.id))
        if t.kind == "sync" and (t.ops or t.bytes or t.size or t.volume or not t.sync_id):
            diags.append(Diagnostic("work", "sync tasks carry only a sync_id", t.id))
    for (s, d) in g.deps:
        if s not in g.tasks or d not in g.tasks:
            diags.append(Diagnostic("dangling", f"dependency {s}->{d} has a missing endpoint", f"{s}->{d}"))
    cyc = g.find_cycle()
    if cyc:
        diags.append(Diagnostic("cycle", "dependency cycle " + " -> ".join(cyc), cyc[0]))
    return diags


def topological_layers(g: TaskGraph) -> List[List[str]]:
    """Kahn layering with ids sorted inside each layer."""
    pred, succ = g.adjacency()
    indeg = {t: len(pred[t]) for t in g.tasks}
    layer = sorted(t for t, n in indeg.items() if n == 0)
    out, seen = [], 0
    while layer:
        out.append(layer)
        seen += len(layer)
        nxt = []
        for u in layer:
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    nxt.append(v)
        layer = sorted(nxt)
    if seen != len(g.tasks):
        raise GraphError("cycle: " + " -> ".join(g.find_cycle() or []))
    return out


# --------------------------------------------------------------------------
# workload files

_TASK_FIELDS = ("id", "kind", "ops", "bytes", "size", "volume", "sync_id", "iterative")


def graph_to_dict(g: TaskGraph) -> Dict:
    tasks = []
    for t in g.tasks.values():
        row = {"id": t.id, "kind": t.kind}
        for k in _TASK_FIELDS[2:]:
            v = getattr(t, k)
            default = Task.__dataclass_fields__[k].default
            if v != default:
                row[k] = v
        tasks.append(row)
    deps = [{"src": d.src, "dst": d.dst, **({"bytes": d.carried_bytes} if d.carried_bytes else {})}
            for d in g.deps.values()]
    return {"tasks": tasks, "deps": deps}


def graph_from_dict(data) -> TaskGraph:
    g = TaskGraph()
    if not isinstance(data, dict) or "tasks" not in data:
        raise FormatError(f"{where(data)}: workload needs a 'tasks' list")
    for i, row in enumerate(data["tasks"]):
        unknown = set(row) - set(_TASK_FIELDS)
        if unknown:
            raise FormatError(f"{where(row, sorted(unknown)[0], f'tasks[{i}]')}: unknown task field")
        try:
            g.add_task(Task(**{k: row[k] for k in row}))
        except (TypeError, GraphError) as exc:
            raise FormatError(f"{where(row, None, f'tasks[{i}]')}: {exc}") from None
    for i, row in enumerate(data.get("deps", []) or []):
        try:
            g.add_dependency(row["src"], row["dst"], row.get("bytes", 0))
        except (KeyError, GraphError) as exc:
            raise FormatError(f"{where(row, None, f'deps[{i}]')}: {exc}") from None
    return g


def load_workload(path) -> TaskGraph:
    return graph_from_dict(load_yaml(path))


def dump_workload(g: TaskGraph) -> str:
    return dump_yaml(graph_to_dict(g))


# --------------------------------------------------------------------------
# synthetic workloads


def transformer_graph(hidden: int, seq: int, batch: int = 1, layers: int = 1, dtype_bytes: int = 2,
                      ffn_mult: int = 4, comm: bool = True) -> TaskGraph:
    """Transformer-block-shaped chain of matmul/softmax/MVM tasks.

    Each layer has weight storage tasks, the attention and MLP compute tasks,
    and (with ``comm``) a communication task carrying the activation between
    consecutive compute tasks.  Work figures are simple shape products; the
    graph only serves as a realistically shaped test workload.
    """
    g = TaskGraph()
    act = batch * seq * hidden * dtype_bytes
    g.add_task(Task("x0", "storage", size=act))
    prev = "x0"

    def link(src, dst, volume, name):
        if comm:
            g.add_task(Task(name, "communication", volume=max(1, volume)))
            g.add_dependency(src, name, volume)
            g.add_dependency(name, dst, volume)
        else:
            g.add_dependency(src, dst, volume)

    for l in range(layers):
        p = f"L{l}."
        mats = {
            "qkv": (hidden, 3 * hidden),
            "proj": (hidden, hidden),
            "up": (hidden, ffn_mult * hidden),
            "down": (ffn_mult * hidden, hidden),
        }
        for w, (k, n) in mats.items():
            g.add_task(Task(p + "W" + w, "storage", size=k * n * dtype_bytes))
        rows = batch * seq
        steps = [
            ("qkv", rows * hidden * 3 * hidden, "Wqkv", act * 4),
            ("score", batch * seq * seq * hidden, None, act + batch * seq * seq * dtype_bytes),
            ("softmax", batch * seq * seq * 5, None, 2 * batch * seq * seq * dtype_bytes),
            ("av", batch * seq * seq * hidden, None, act + batch * seq * seq * dtype_bytes),
            ("proj", rows * hidden * hidden, "Wproj", 2 * act),
            ("up", rows * hidden * ffn_mult * hidden, "Wup", act * (1 + ffn_mult)),
            ("act", rows * ffn_mult * hidden, None, 2 * act * ffn_mult),
            ("down", rows * ffn_mult * hidden * hidden, "Wdown", act * (1 + ffn_mult)),
        ]
        for i, (name, ops, weight, nbytes) in enumerate(steps):
            tid = p + name
            g.add_task(Task(tid, "compute", ops=ops, bytes=nbytes))
            if weight:
                g.add_dependency(p + weight, tid, 0)
            if g.tasks[prev].kind == "storage":
                g.add_dependency(prev, tid, act)
            else:
                link(prev, tid, act * (ffn_mult if name == "down" else 1), f"{p}T{i}")
            prev = tid
    return g
