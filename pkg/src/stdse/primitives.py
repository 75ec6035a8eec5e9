"""Composable mapping primitives over an immutable search state.

Four families: graph transformation (:func:`tile_task`), task assignment
(:func:`assign_block`, :func:`place`, :func:`route`, :func:`auto_route`),
synchronization (:func:`insert_sync_barrier`, :func:`set_phase`) and state
control (:func:`snapshot`, :func:`restore`, :func:`replay`).  Every
primitive returns a new :class:`SearchState` whose lineage records the call,
so replaying the lineage from the initial state rebuilds the same graph and
mapping.  Search procedures are left to the user.
"""

from __future__ import annotations

import itertools
import math
import re
import shlex
import uuid
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .coords import CoordError, as_coord, format_coord, parse_coord, sort_key
from .hardware import HardwareModel, SpaceMatrix, enumerate_points, retrieve
from .mapping import (
    Mapping,
    MappingError,
    auto_route_all,
    define_group,
    lower_time_coords,
    map_edge,
    map_node,
    set_time,
    sync,
    unmap,
)
from .taskgraph import Dependency, Task, TaskGraph


class PrimitiveError(ValueError):
    pass


@dataclass(frozen=True)
class PrimitiveRecord:
    name: str
    params: Tuple[Tuple[str, object], ...]

    def as_dict(self) -> Dict:
        return {"op": self.name, **{k: _plain(v) for k, v in self.params}}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _frozen(v):
    if isinstance(v, list):
        return tuple(_frozen(x) for x in v)
    return v


@dataclass(frozen=True)
class SearchState:
    graph: TaskGraph
    mapping: Mapping
    lineage: Tuple[PrimitiveRecord, ...] = ()
    model: Optional[HardwareModel] = field(default=None, compare=False, repr=False)
    origin: Optional[Tuple[TaskGraph, Mapping]] = field(default=None, compare=False, repr=False)

    def _next(self, graph, mapping, op, **params) -> "SearchState":
        rec = PrimitiveRecord(op, tuple(sorted((k, _frozen(v)) for k, v in params.items())))
        return replace(self, graph=graph, mapping=mapping, lineage=self.lineage + (rec,))


def initial_state(g: TaskGraph, model: HardwareModel, mapping: Optional[Mapping] = None) -> SearchState:
    m = mapping or Mapping()
    return SearchState(g.copy(), m, (), model, (g.copy(), m))


# --------------------------------------------------------------------------
# graph transformation


def split_even(total: int, n: int) -> List[int]:
    """Ceiling-first split: the first ``total % n`` parts get one extra unit."""
    q, r = divmod(int(total), n)
    return [q + 1 if i < r else q for i in range(n)]


def split_weighted(total: int, weights: Sequence[int]) -> List[int]:
    """Split ``total`` in proportion to ``weights``; leftovers go to the first parts."""
    w = sum(weights)
    if w == 0:
        return split_even(total, len(weights))
    parts = [total * x // w for x in weights]
    left = total - sum(parts)
    for i in range(left):
        parts[i % len(parts)] += 1
    return parts


def tile_labels(name: str, tile_vector: Sequence[int]) -> List[str]:
    return [f"{name}[{','.join(map(str, idx))}]" for idx in itertools.product(*(range(k) for k in tile_vector))]


def tile_task(s: SearchState, task: str, tile_vector: Sequence[int]) -> SearchState:
    """Replace ``task`` by one sub-task per tile, splitting its work evenly.

    Dependencies fan out all-to-all.  A communication task feeding or fed by
    the tiled task is duplicated per tile (it must keep one producer and one
    consumer), with its volume split in proportion to tile work; direct
    dependencies split their carried bytes the same way.
    """
    g = s.graph
    if task not in g.tasks:
        raise PrimitiveError(f"tile_task: unknown task {task!r}")
    t = g.tasks[task]
    if t.kind not in ("compute", "storage"):
        raise PrimitiveError(f"tile_task: cannot tile {t.kind} task {task!r}")
    tv = [int(k) for k in tile_vector]
    if not tv or any(k < 1 for k in tv):
        raise PrimitiveError(f"tile_task: tile vector {list(tile_vector)} needs positive splits")
    n = math.prod(tv)
    if n == 1:
        return s._next(g, s.mapping, "tile_task", task=task, tile_vector=tuple(tv))
    names = tile_labels(task, tv)
    for nm in names:
        if nm in g.tasks:
            raise PrimitiveError(f"tile_task: tile id {nm!r} already exists")
    ops, byts, size = split_even(t.ops, n), split_even(t.bytes, n), split_even(t.size, n)
    tiles = [replace(t, id=nm, ops=ops[i], bytes=byts[i], size=size[i]) for i, nm in enumerate(names)]
    weights = [x.ops if t.kind == "compute" else x.size for x in tiles]

    new = TaskGraph()
    pred, succ = g.adjacency()
    dropped = {task}
    fan_in = {p for p in pred[task]}
    fan_out = {q for q in succ[task]}
    dup_comm = {c for c in fan_in | fan_out if g.tasks[c].kind == "communication"}
    dropped |= dup_comm
    for x in g.tasks.values():
        if x.id == task:
            for tile in tiles:
                new.add_task(tile)
        elif x.id in dup_comm:
            vols = [max(1, v) for v in split_weighted(x.volume, weights)]
            for i, tile in enumerate(tiles):
                new.add_task(replace(x, id=f"{x.id}[{names[i][len(task) + 1:-1]}]", volume=vols[i]))
        else:
            new.add_task(x)

    def comm_tile(c, i):
        return f"{c}[{names[i][len(task) + 1:-1]}]"

    for d in g.deps.values():
        a, b = d.src, d.dst
        if b == task and a in dup_comm:
            for i, tile in enumerate(tiles):
                new.add_dependency(comm_tile(a, i), tile.id, d.carried_bytes and max(1, split_weighted(d.carried_bytes, weights)[i]))
        elif b == task:
            cb = split_weighted(d.carried_bytes, weights)
            for i, tile in enumerate(tiles):
                new.add_dependency(a, tile.id, cb[i])
        elif a == task and b in dup_comm:
            for i, tile in enumerate(tiles):
                new.add_dependency(tile.id, comm_tile(b, i), d.carried_bytes and max(1, split_weighted(d.carried_bytes, weights)[i]))
        elif a == task:
            cb = split_weighted(d.carried_bytes, weights)
            for i, tile in enumerate(tiles):
                new.add_dependency(tile.id, b, cb[i])
        elif b in dup_comm:  # producer side of a duplicated input transfer
            cb = split_weighted(d.carried_bytes, weights)
            for i in range(n):
                new.add_dependency(a, comm_tile(b, i), cb[i])
        elif a in dup_comm:  # consumer side of a duplicated output transfer
            cb = split_weighted(d.carried_bytes, weights)
            for i in range(n):
                new.add_dependency(comm_tile(a, i), b, cb[i])
        else:
            new.add_dependency(d)
    m = unmap(s.mapping, dropped)
    return s._next(new, m, "tile_task", task=task, tile_vector=tuple(tv))


# --------------------------------------------------------------------------
# task assignment


_POINT_KIND = {"compute": "compute", "storage": "memory"}


def expand_tasks(g: TaskGraph, spec) -> List[str]:
    """Task ids from a list or a comma-separated string of ids and glob patterns.

    Items keep their given order; the tasks matched by one pattern come in graph order.
    """
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    out: List[str] = []
    for it in items:
        it = it.strip()
        if not it:
            continue
        if any(ch in it for ch in "*?"):
            rx = re.compile(re.escape(it).replace(r"\*", ".*").replace(r"\?", "."))
            hits = [t for t in g.tasks if rx.fullmatch(t)]
            if not hits:
                raise PrimitiveError(f"pattern {it!r} matches no task")
            out.extend(h for h in hits if h not in out)
        else:
            if it not in g.tasks:
                raise PrimitiveError(f"unknown task {it!r}")
            if it not in out:
                out.append(it)
    return out


def assign_block(s: SearchState, tasks, region=(), policy: str = "row-major") -> SearchState:
    """Place ``tasks`` over the points of ``region``.

    ``row-major`` puts one task per point in row-major order and fails when
    the region is too small; ``round-robin`` wraps around.  Compute tasks go
    to compute points, storage tasks to memory points.
    """
    if policy not in ("row-major", "round-robin"):
        raise PrimitiveError(f"assign_block: unknown policy {policy!r}")
    tasks = expand_tasks(s.graph, tasks)
    region = as_coord(region)
    try:
        el = retrieve(s.model, region)
    except CoordError as exc:
        raise PrimitiveError(f"assign_block: {exc}") from None
    if not isinstance(el, SpaceMatrix):
        raise PrimitiveError(f"assign_block: region {format_coord(region) or 'root'} is a point, not a SpaceMatrix")
    m = s.mapping
    by_kind: Dict[str, List[str]] = {}
    for t in tasks:
        k = s.graph.tasks[t].kind
        if k not in _POINT_KIND:
            raise PrimitiveError(f"assign_block: {k} task {t!r} cannot be placed on a point")
        by_kind.setdefault(_POINT_KIND[k], []).append(t)
    for kind, ts in by_kind.items():
        pts = [c for c, _ in enumerate_points(s.model, kind, region)]
        if not pts:
            raise PrimitiveError(f"assign_block: no {kind} points in {format_coord(region) or 'root'}")
        if policy == "row-major" and len(ts) > len(pts):
            raise PrimitiveError(
                f"assign_block: region {format_coord(region) or 'root'} has {len(pts)} {kind} points, "
                f"row-major needs {len(ts)}"
            )
        for i, t in enumerate(ts):
            m = _place(m, s.graph, s.model, t, pts[i % len(pts)])
    return s._next(s.graph, m, "assign_block", tasks=tuple(tasks), region=format_coord(region), policy=policy)


def _place(m, g, model, t, c):
    try:
        m2 = map_node(m, g, model, t, c)
    except MappingError as exc:
        raise PrimitiveError(str(exc)) from None
    if m.node_map.get(t) not in (None, m2.node_map[t]):
        # explicit routes of incident transfers no longer match; fall back to default routes
        pred, succ = g.adjacency()
        stale = [c2 for c2 in pred[t] + succ[t] if c2 in m2.edge_maps]
        m2 = replace(m2, edge_maps={k: v for k, v in m2.edge_maps.items() if k not in stale})
    return m2


def place(s: SearchState, task: str, coord) -> SearchState:
    if task not in s.graph.tasks:
        raise PrimitiveError(f"place: unknown task {task!r}")
    c = as_coord(coord)
    return s._next(s.graph, _place(s.mapping, s.graph, s.model, task, c), "place", task=task, coord=format_coord(c))


def route(s: SearchState, edge: str, path, sub_paths, domains=()) -> SearchState:
    path = [as_coord(c) for c in path]
    subs = tuple(tuple(tuple(w) for w in sp) for sp in sub_paths)
    try:
        m = map_edge(s.mapping, s.graph, s.model, edge, path, subs, tuple(domains))
    except (MappingError, CoordError) as exc:
        raise PrimitiveError(str(exc)) from None
    return s._next(s.graph, m, "route", edge=edge, path=tuple(format_coord(c) for c in path),
                   sub_paths=subs, domains=tuple(domains))


def auto_route(s: SearchState) -> SearchState:
    try:
        m = auto_route_all(s.mapping, s.graph, s.model)
    except MappingError as exc:
        raise PrimitiveError(str(exc)) from None
    return s._next(s.graph, m, "auto_route")


# --------------------------------------------------------------------------
# synchronization


def insert_sync_barrier(s: SearchState, after, allow_empty: bool = False) -> SearchState:
    """Barrier across the points hosting ``after``, right behind those tasks.

    No other task on those points starts before every task of ``after`` has
    ended.
    """
    tasks = expand_tasks(s.graph, after) if after else []
    if not tasks:
        if allow_empty:
            return s._next(s.graph, s.mapping, "insert_sync_barrier", after=())
        raise PrimitiveError("insert_sync_barrier: empty task set")
    before: Dict = {}
    for t in tasks:
        if t not in s.mapping.node_map:
            raise PrimitiveError(f"insert_sync_barrier: task {t!r} is not placed")
        before.setdefault(s.mapping.node_map[t], set()).add(t)
    used = {r.sync_id for r in s.mapping.sync_tasks}
    k = 0
    while f"barrier{k}" in used:
        k += 1
    sid = f"barrier{k}"
    m = sync(s.mapping, s.model, sid, list(before), before)
    return s._next(s.graph, m, "insert_sync_barrier", after=tuple(tasks))


def set_phase(s: SearchState, tasks, time: Sequence[int]) -> SearchState:
    """Give ``tasks`` a multi-level time coordinate (lowered into barriers later)."""
    tasks = expand_tasks(s.graph, tasks)
    m = s.mapping
    for t in tasks:
        m = set_time(m, t, time)
    return s._next(s.graph, m, "set_phase", tasks=tuple(tasks), time=tuple(int(x) for x in time))


def add_group(s: SearchState, name: str, members, level: int = 2) -> SearchState:
    members = [format_coord(as_coord(c)) for c in members]
    try:
        m = define_group(s.mapping, s.model, name, members, level)
    except (MappingError, CoordError) as exc:
        raise PrimitiveError(str(exc)) from None
    return s._next(s.graph, m, "add_group", name=name, members=tuple(members), level=level)


def lower_phases(s: SearchState) -> SearchState:
    try:
        m = lower_time_coords(s.mapping, s.graph, s.model)
    except MappingError as exc:
        raise PrimitiveError(str(exc)) from None
    return s._next(s.graph, m, "lower_phases")


# --------------------------------------------------------------------------
# state control

_RUN = uuid.uuid4().hex[:8]
_SNAPSHOTS: Dict[str, SearchState] = {}
_counter = itertools.count()


def snapshot(s: SearchState) -> str:
    token = f"{_RUN}-{next(_counter)}"
    _SNAPSHOTS[token] = s
    return token


def restore(token: str) -> SearchState:
    try:
        return _SNAPSHOTS[token]
    except KeyError:
        raise PrimitiveError(f"unknown snapshot token {token!r}") from None


PRIMITIVES: Dict[str, Callable] = {
    "tile_task": lambda s, p: tile_task(s, p["task"], p["tile_vector"]),
    "assign_block": lambda s, p: assign_block(s, list(p["tasks"]), parse_coord(p["region"]) if p["region"] else (),
                                              p["policy"]),
    "place": lambda s, p: place(s, p["task"], parse_coord(p["coord"])),
    "route": lambda s, p: route(s, p["edge"], [parse_coord(c) for c in p["path"]], p["sub_paths"], p.get("domains", ())),
    "auto_route": lambda s, p: auto_route(s),
    "insert_sync_barrier": lambda s, p: insert_sync_barrier(s, list(p["after"]), allow_empty=not p["after"]),
    "set_phase": lambda s, p: set_phase(s, list(p["tasks"]), p["time"]),
    "add_group": lambda s, p: add_group(s, p["name"], [parse_coord(c) for c in p["members"]], p["level"]),
    "lower_phases": lambda s, p: lower_phases(s),
}


def apply_record(s: SearchState, rec) -> SearchState:
    if isinstance(rec, dict):
        rec = PrimitiveRecord(rec["op"], tuple(sorted((k, _frozen(v)) for k, v in rec.items() if k != "op")))
    if rec.name not in PRIMITIVES:
        raise PrimitiveError(f"unknown primitive {rec.name!r}")
    return PRIMITIVES[rec.name](s, dict(rec.params))


def replay(lineage, g: TaskGraph, model: HardwareModel, mapping: Optional[Mapping] = None) -> SearchState:
    s = initial_state(g, model, mapping)
    for rec in lineage:
        s = apply_record(s, rec)
    return s


# --------------------------------------------------------------------------
# primitive scripts
#
# One primitive per line; '#' starts a comment.  Coordinates use the usual
# text form, e.g. ((0,0)->(1,1)); task lists are comma-separated ids or glob
# patterns.
#
#   tile_task  <task> <split> [<split> ...]
#   assign     <tasks> <region|root> [row-major|round-robin]
#   place      <task> <coord>
#   route      <edge> <coord> <coord> [...] via=<w>,<w>;<w>,<w> [domains=0,1]
#   auto_route
#   barrier    <tasks>
#   phase      <tasks> <t0,t1,...>
#   group      <name> <coord> [<coord> ...] [level=N]
#   lower_phases
#   snapshot   <name>
#   restore    <name>

_WAYPOINT = re.compile(r"\(([^()]*)\)")


def _waypoints(text: str):
    segs = []
    for seg in text.split(";"):
        pts = [tuple(int(x) for x in m.group(1).split(",") if x.strip()) for m in _WAYPOINT.finditer(seg)]
        if not pts:
            raise PrimitiveError(f"bad waypoint list {seg!r}")
        segs.append(tuple(pts))
    return tuple(segs)


def _region(text: str):
    return () if text in ("root", "()", "") else parse_coord(text)


def run_script(text: str, s: SearchState, source: str = "<script>") -> SearchState:
    names: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            words = shlex.split(line)
            cmd, args = words[0], words[1:]
            kw = dict(a.split("=", 1) for a in args if "=" in a and not a.startswith("("))
            pos = [a for a in args if not ("=" in a and not a.startswith("("))]
            s = _dispatch(s, cmd, pos, kw, names)
        except (PrimitiveError, MappingError, CoordError, ValueError, IndexError) as exc:
            raise PrimitiveError(f"{source}:{lineno}: {exc}") from None
    return s


def _need(pos, n, usage):
    if len(pos) < n:
        raise PrimitiveError(f"usage: {usage}")


def _dispatch(s, cmd, pos, kw, names):
    if cmd == "tile_task":
        _need(pos, 2, "tile_task <task> <split> [...]")
        return tile_task(s, pos[0], [int(x) for x in pos[1:]])
    if cmd in ("assign", "assign_block"):
        _need(pos, 2, "assign <tasks> <region> [policy]")
        return assign_block(s, pos[0], _region(pos[1]), pos[2] if len(pos) > 2 else "row-major")
    if cmd == "place":
        _need(pos, 2, "place <task> <coord>")
        return place(s, pos[0], parse_coord(pos[1]))
    if cmd == "route":
        _need(pos, 2, "route <edge> <coord> ... via=...")
        if "via" not in kw:
            raise PrimitiveError("route needs via=<waypoints per segment>")
        doms = tuple(int(x) for x in kw["domains"].split(",")) if "domains" in kw else ()
        return route(s, pos[0], [parse_coord(c) for c in pos[1:]], _waypoints(kw["via"]), doms)
    if cmd == "auto_route":
        return auto_route(s)
    if cmd in ("barrier", "insert_sync_barrier"):
        _need(pos, 1, "barrier <tasks>")
        return insert_sync_barrier(s, pos[0])
    if cmd == "phase":
        _need(pos, 2, "phase <tasks> <t0,t1,...>")
        return set_phase(s, pos[0], [int(x) for x in pos[1].split(",")])
    if cmd == "group":
        _need(pos, 2, "group <name> <coord> ...")
        return add_group(s, pos[0], [parse_coord(c) for c in pos[1:]], int(kw.get("level", 2)))
    if cmd == "lower_phases":
        return lower_phases(s)
    if cmd == "snapshot":
        _need(pos, 1, "snapshot <name>")
        names[pos[0]] = snapshot(s)
        return s
    if cmd == "restore":
        _need(pos, 1, "restore <name>")
        if pos[0] not in names:
            raise PrimitiveError(f"no snapshot named {pos[0]!r}")
        return restore(names[pos[0]])
    raise PrimitiveError(f"unknown primitive {cmd!r}")
