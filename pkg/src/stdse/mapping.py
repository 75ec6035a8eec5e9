"""Spatiotemporal mapping IR.

A :class:`Mapping` is an immutable value: every operation returns a new
mapping.  Compute and storage tasks are placed on points with
:func:`map_node`; communication tasks are decomposed with :func:`map_edge`
into one sub-task per pair of consecutive critical coordinates, each living on
the communication point of the SpaceMatrix the segment crosses.  Ordering is
added with explicit barriers (:func:`sync`) or derived from multi-level time
tuples (:func:`lower_time_coords`).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping as TMapping, Optional, Sequence, Tuple

from .coords import (
    CommDomain,
    Coord,
    CoordError,
    as_coord,
    common_prefix_len,
    format_coord,
    sort_key,
    to_jsonable,
)
from .diagnostics import Diagnostic
from .hardware import (
    HardwareModel,
    SpaceMatrix,
    SpacePoint,
    gateway,
    retrieve,
    virtual_group_points,
)
from .taskgraph import TaskGraph
from .textio import FormatError, dump_yaml, load_yaml, where
from .topology import RoutingError, default_waypoints, expand_hops, link_of

Index = Tuple[int, ...]

_KIND_FOR = {"compute": "compute", "storage": "memory"}


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeMapping:
    edge: str
    path: Tuple[Coord, ...]
    sub_paths: Tuple[Tuple[Index, ...], ...]
    domains: Tuple[int, ...] = ()

    def domain(self, i: int) -> int:
        return self.domains[i] if i < len(self.domains) else 0


@dataclass(frozen=True)
class SyncRecord:
    """One SyncTask: barrier ``sync_id`` as seen on the point at ``coord``.

    ``before`` are the tasks on that point queued ahead of the barrier.
    ``after`` optionally pins the tasks held back by it; when ``None`` every
    task on the point not queued ahead of this or an earlier barrier waits.
    """

    sync_id: str
    coord: Coord
    before: FrozenSet[str] = frozenset()
    after: Optional[FrozenSet[str]] = None
    generated: bool = False


@dataclass(frozen=True)
class SubTask:
    id: str
    index: int
    comm_coord: Coord
    point: SpacePoint
    hops: Tuple[Tuple[Index, Index], ...]
    links: Tuple[Tuple, ...]

    @property
    def latency(self):
        return len(self.hops) * self.point.topology.hop_latency


@dataclass(frozen=True)
class Mapping:
    node_map: TMapping[str, Coord] = field(default_factory=dict)
    edge_maps: TMapping[str, EdgeMapping] = field(default_factory=dict)
    time_map: TMapping[str, Tuple[int, ...]] = field(default_factory=dict)
    groups: TMapping[str, SpaceMatrix] = field(default_factory=dict)
    sync_tasks: Tuple[SyncRecord, ...] = ()
    order_deps: Tuple[Tuple[str, str], ...] = ()

    def __hash__(self):
        return hash((tuple(sorted(self.node_map.items(), key=lambda kv: kv[0])), self.sync_tasks))


# --------------------------------------------------------------------------
# task assignment


def _kind_ok(task_kind: str, point: SpacePoint) -> bool:
    return _KIND_FOR.get(task_kind) == point.kind


def map_node(m: Mapping, g: TaskGraph, model: HardwareModel, task: str, c) -> Mapping:
    if task not in g.tasks:
        raise MappingError(f"unknown task {task!r}")
    t = g.tasks[task]
    if t.kind not in _KIND_FOR:
        raise MappingError(f"task {task!r} is a {t.kind} task; only compute/storage tasks are node-mapped")
    c = as_coord(c)
    try:
        el = retrieve(model, c)
    except CoordError as exc:
        raise MappingError(f"task {task!r}: unresolvable coordinate: {exc}") from None
    if not isinstance(el, SpacePoint):
        raise MappingError(f"task {task!r}: {format_coord(c)} is a SpaceMatrix, not a SpacePoint")
    if not _kind_ok(t.kind, el):
        raise MappingError(f"task {task!r}: kind mismatch, {t.kind} task on {el.kind} point {format_coord(c)}")
    nm = dict(m.node_map)
    nm.pop(task, None)
    nm[task] = c
    return replace(m, node_map=nm)


def unmap(m: Mapping, tasks: Iterable[str]) -> Mapping:
    drop = set(tasks)
    return replace(
        m,
        node_map={k: v for k, v in m.node_map.items() if k not in drop},
        edge_maps={k: v for k, v in m.edge_maps.items() if k not in drop},
        time_map={k: v for k, v in m.time_map.items() if k not in drop},
        sync_tasks=tuple(
            replace(s, before=s.before - drop, after=None if s.after is None else s.after - drop)
            for s in m.sync_tasks
        ),
        order_deps=tuple(p for p in m.order_deps if p[0] not in drop and p[1] not in drop),
    )


# --------------------------------------------------------------------------
# communication decomposition


def _segment(model: HardwareModel, a: Coord, b: Coord, i: int):
    k = common_prefix_len(a, b)
    if k >= len(a) or k >= len(b):
        raise MappingError(
            f"path segment {i}: {format_coord(a)} -> {format_coord(b)} does not cross a level "
            "(one coordinate is a prefix of the other)"
        )
    if isinstance(a[k], CommDomain) or isinstance(b[k], CommDomain):
        raise MappingError(f"path segment {i}: critical coordinates cannot address comm points")
    matrix = retrieve(model, a[:k])
    return k, matrix, a[k], b[k]


def decompose_edge(model: HardwareModel, edge: str, path: Sequence[Coord], sub_paths: Sequence[Sequence[Index]],
                   domains: Sequence[int] = ()) -> List[SubTask]:
    """Split a communication task along its critical coordinates.

    ``len(path)`` critical coordinates give ``len(path) - 1`` sub-tasks and
    need exactly that many sub-paths.
    """
    path = [as_coord(c) for c in path]
    if len(path) < 1:
        raise MappingError(f"edge {edge!r}: empty path")
    if len(sub_paths) != len(path) - 1:
        raise MappingError(
            f"edge {edge!r}: length mismatch, {len(path)} critical coordinates need {len(path) - 1} sub-paths, "
            f"got {len(sub_paths)}"
        )
    for c in path:
        try:
            retrieve(model, c)
        except CoordError as exc:
            raise MappingError(f"edge {edge!r}: {exc}") from None
    out = []
    for i, (a, b) in enumerate(zip(path, path[1:])):
        k, matrix, ia, ib = _segment(model, a, b, i)
        wps = [tuple(w) if not isinstance(w, int) else (w,) for w in sub_paths[i]]
        if not wps or wps[0] != ia or wps[-1] != ib:
            raise MappingError(
                f"edge {edge!r}: sub-path {i} must run from {ia} to {ib} inside {format_coord(a[:k]) or 'root'}, got {wps}"
            )
        d = domains[i] if i < len(domains) else 0
        if d >= len(matrix.comm_points):
            raise MappingError(
                f"edge {edge!r}: unknown comm domain {d} at {format_coord(a[:k]) or 'root'} "
                f"({len(matrix.comm_points)} defined)"
            )
        cp = matrix.comm_points[d]
        try:
            hops = expand_hops(cp.topology, matrix.dims, wps)
        except RoutingError as exc:
            raise MappingError(f"edge {edge!r}: sub-path {i}: non-adjacent hop: {exc}") from None
        links = tuple(dict.fromkeys((cp.id, link_of(cp.topology, x, y)) for x, y in hops))
        out.append(SubTask(f"{edge}#{i}", i, a[:k] + (CommDomain(d),), cp, tuple(hops), links))
    return out


def endpoints(g: TaskGraph, edge: str) -> Tuple[str, str]:
    pred = [s for (s, d) in g.deps if d == edge]
    succ = [d for (s, d) in g.deps if s == edge]
    if len(pred) != 1 or len(succ) != 1:
        raise MappingError(f"edge {edge!r} needs exactly one producer and one consumer")
    return pred[0], succ[0]


def map_edge(m: Mapping, g: TaskGraph, model: HardwareModel, edge: str, path, sub_paths,
             domains: Sequence[int] = ()) -> Mapping:
    if edge not in g.tasks or g.tasks[edge].kind != "communication":
        raise MappingError(f"{edge!r} is not a communication task")
    path = tuple(as_coord(c) for c in path)
    sub_paths = tuple(tuple(tuple(w) if not isinstance(w, int) else (w,) for w in sp) for sp in sub_paths)
    src, dst = endpoints(g, edge)
    for role, t, c in (("producer", src, path[0] if path else None), ("consumer", dst, path[-1] if path else None)):
        if t not in m.node_map:
            raise MappingError(f"edge {edge!r}: {role} {t!r} is not placed")
        if m.node_map[t] != c:
            raise MappingError(
                f"edge {edge!r}: endpoint mismatch, path {role} end {format_coord(c)} but {t!r} is at "
                f"{format_coord(m.node_map[t])}"
            )
    decompose_edge(model, edge, path, sub_paths, domains)
    em = dict(m.edge_maps)
    em[edge] = EdgeMapping(edge, path, sub_paths, tuple(domains))
    return replace(m, edge_maps=em)


def auto_route(model: HardwareModel, src: Coord, dst: Coord) -> Tuple[Tuple[Coord, ...], Tuple[Tuple[Index, ...], ...]]:
    """Default route: climb to the lowest common ancestor, cross, descend.

    Levels are entered and left through their gateway element (the all-zero
    index); intra-level hops follow dimension order.
    """
    src, dst = as_coord(src), as_coord(dst)
    if src == dst:
        return (src,), ()
    k = common_prefix_len(src, dst)
    coords = [src]
    for j in range(len(src) - 1, k, -1):
        c = gateway(model, src[:j])
        if c != coords[-1]:
            coords.append(c)
    for j in range(k + 1, len(dst) + 1):
        c = gateway(model, dst[:j])
        if c != coords[-1]:
            coords.append(c)
    subs = []
    for i, (a, b) in enumerate(zip(coords, coords[1:])):
        kk, matrix, ia, ib = _segment(model, a, b, i)
        if not matrix.comm_points:
            raise MappingError(f"no communication point at {format_coord(a[:kk]) or 'root'} to route through")
        subs.append(tuple(default_waypoints(matrix.comm_points[0].topology, matrix.dims, ia, ib)))
    return tuple(coords), tuple(subs)


def edge_route(m: Mapping, g: TaskGraph, model: HardwareModel, edge: str) -> EdgeMapping:
    """Explicit edge mapping if present, otherwise the default route."""
    if edge in m.edge_maps:
        return m.edge_maps[edge]
    src, dst = endpoints(g, edge)
    if src not in m.node_map or dst not in m.node_map:
        raise MappingError(f"edge {edge!r}: endpoints not placed, cannot auto-route")
    path, subs = auto_route(model, m.node_map[src], m.node_map[dst])
    return EdgeMapping(edge, path, subs, ())


def auto_route_all(m: Mapping, g: TaskGraph, model: HardwareModel) -> Mapping:
    """Default routes for unrouted transfers whose producer and consumer are placed."""
    em = dict(m.edge_maps)
    for t in g.tasks.values():
        if t.kind == "communication" and t.id not in em:
            src, dst = endpoints(g, t.id)
            if src in m.node_map and dst in m.node_map:
                em[t.id] = edge_route(m, g, model, t.id)
    return replace(m, edge_maps=em)


# --------------------------------------------------------------------------
# synchronization


def sync(m: Mapping, model: HardwareModel, sync_id: str, coords: Iterable, before: Optional[TMapping] = None,
         after: Optional[TMapping] = None) -> Mapping:
    """Insert one SyncTask per point; the barrier completes when all are ready.

    ``before`` maps a coordinate to the tasks queued ahead of the barrier on
    that point; ``after`` optionally pins the tasks it holds back.
    """
    if any(s.sync_id == sync_id for s in m.sync_tasks):
        raise MappingError(f"sync_id {sync_id!r} already used")
    coords = [as_coord(c) for c in coords]
    before = {as_coord(k): frozenset(v) for k, v in (before or {}).items()}
    after = {as_coord(k): frozenset(v) for k, v in (after or {}).items()}
    if not coords:
        raise MappingError(f"sync {sync_id!r}: no points given")
    recs = []
    for c in sorted(dict.fromkeys(coords), key=sort_key):
        try:
            el = retrieve(model, c)
        except CoordError as exc:
            raise MappingError(f"sync {sync_id!r}: {exc}") from None
        if not isinstance(el, SpacePoint):
            raise MappingError(f"sync {sync_id!r}: {format_coord(c)} is not a SpacePoint")
        recs.append(SyncRecord(sync_id, c, before.get(c, frozenset()), after.get(c)))
    # generated (time-lowered) records stay last so that file round trips keep the order
    user = tuple(r for r in m.sync_tasks if not r.generated)
    gen = tuple(r for r in m.sync_tasks if r.generated)
    return replace(m, sync_tasks=user + tuple(recs) + gen)


def define_group(m: Mapping, model: HardwareModel, name: str, members: Iterable, level: int = 2) -> Mapping:
    members = tuple(as_coord(c) for c in members)
    if name in m.groups or name in model.virtual_groups:
        raise MappingError(f"group {name!r} already defined")
    for c in members:
        try:
            retrieve(model, c)
        except CoordError as exc:
            raise MappingError(f"group {name!r}: {exc}") from None
    grp = SpaceMatrix(name=name, dims=(len(members),), is_virtual_group=True, members=members, level=level)
    return replace(m, groups={**m.groups, name: grp})


def set_time(m: Mapping, task: str, t: Sequence[int]) -> Mapping:
    t = tuple(int(x) for x in t)
    if any(x < 0 for x in t):
        raise MappingError(f"task {task!r}: time coordinates must be non-negative")
    return replace(m, time_map={**m.time_map, task: t})


def lower_time_coords(m: Mapping, g: TaskGraph, model: HardwareModel) -> Mapping:
    """Materialize barriers and queue order implied by multi-level time tuples.

    On every point, tasks run in lexicographic time order.  For each virtual
    group governing level ``i > 1``, tasks of the group whose tuples differ at
    level ``i`` or above fall into successive phases, and a barrier separates
    consecutive phases across all of the group's points.  Previously
    generated records are replaced, so lowering twice is a no-op.
    """
    timed = {t: tm for t, tm in m.time_map.items() if t in g.tasks}
    kept = tuple(s for s in m.sync_tasks if not s.generated)
    if not timed:
        return replace(m, sync_tasks=kept, order_deps=())
    lengths = {len(v) for v in timed.values()}
    if len(lengths) != 1:
        raise MappingError(f"time tuples of mixed length {sorted(lengths)}")
    n = lengths.pop()
    where_ = {}
    for t in timed:
        if t not in m.node_map:
            raise MappingError(f"task {t!r} has a time coordinate but no placement")
        where_[t] = m.node_map[t]

    # per-point queue order
    order = []
    by_point = defaultdict(list)
    for t, c in where_.items():
        by_point[c].append(t)
    for c in sorted(by_point, key=sort_key):
        classes = defaultdict(list)
        for t in by_point[c]:
            classes[timed[t]].append(t)
        keys = sorted(classes)
        for k0, k1 in zip(keys, keys[1:]):
            for a in sorted(classes[k0]):
                for b in sorted(classes[k1]):
                    order.append((a, b))

    all_groups = {**model.virtual_groups, **m.groups}
    group_points = {name: set(virtual_group_points(model, grp)) for name, grp in all_groups.items()}
    recs = []
    for level in range(2, n + 1):
        cut = n - level + 1  # tuple prefix that identifies a phase at this level
        level_groups = sorted(name for name, grp in all_groups.items() if grp.level == level)
        covered = defaultdict(list)
        for name in level_groups:
            for c in group_points[name]:
                covered[c].append(name)
        for c, ts in by_point.items():
            phases = {timed[t][:cut] for t in ts}
            if len(phases) > 1 and not covered.get(c):
                raise MappingError(
                    f"tasks on {format_coord(c)} change time level {level} but the point is in no level-{level} group"
                )
            if len(covered.get(c, [])) > 1:
                raise MappingError(f"{format_coord(c)} is in several level-{level} groups: {covered[c]}")
        for name in level_groups:
            pts = group_points[name]
            members = [t for t, c in where_.items() if c in pts]
            phases = defaultdict(list)
            for t in members:
                phases[timed[t][:cut]].append(t)
            keys = sorted(phases)
            for j, (p0, p1) in enumerate(zip(keys, keys[1:])):
                sid = f"time:{name}:L{level}:{j}"
                bpts = defaultdict(set)
                apts = defaultdict(set)
                for t in phases[p0]:
                    bpts[where_[t]].add(t)
                for t in phases[p1]:
                    apts[where_[t]].add(t)
                for c in sorted(set(bpts) | set(apts), key=sort_key):
                    recs.append(SyncRecord(sid, c, frozenset(bpts.get(c, ())), frozenset(apts.get(c, ())), True))
    return replace(m, sync_tasks=kept + tuple(recs), order_deps=tuple(order))


# --------------------------------------------------------------------------
# validation


def validate_mapping(m: Mapping, g: TaskGraph, model: HardwareModel) -> List[Diagnostic]:
    diags: List[Diagnostic] = []
    for t in g.tasks.values():
        if t.kind in _KIND_FOR:
            if t.id not in m.node_map:
                diags.append(Diagnostic("unplaced", f"{t.kind} task is not placed", t.id))
                continue
            c = m.node_map[t.id]
            try:
                el = retrieve(model, c)
            except CoordError as exc:
                diags.append(Diagnostic("coord", str(exc), t.id))
                continue
            if not isinstance(el, SpacePoint):
                diags.append(Diagnostic("coord", f"{format_coord(c)} is not a SpacePoint", t.id))
            elif not _kind_ok(t.kind, el):
                diags.append(Diagnostic("kind", f"{t.kind} task on {el.kind} point {format_coord(c)}", t.id))
    for tid in m.node_map:
        if tid not in g.tasks:
            diags.append(Diagnostic("unknown-task", "mapping names a task missing from the graph", tid))
    for t in g.tasks.values():
        if t.kind != "communication":
            continue
        if t.id not in m.edge_maps:
            diags.append(Diagnostic("unrouted", "edge has no explicit route (default router applies)", t.id, "warning"))
            continue
        em = m.edge_maps[t.id]
        try:
            src, dst = endpoints(g, t.id)
        except MappingError as exc:
            diags.append(Diagnostic("endpoints", str(exc), t.id))
            continue
        for role, task, c in (("producer", src, em.path[0]), ("consumer", dst, em.path[-1])):
            if m.node_map.get(task) != c:
                diags.append(Diagnostic(
                    "endpoint", f"path {role} end {format_coord(c)} disagrees with placement of {task!r}", t.id))
        try:
            decompose_edge(model, t.id, em.path, em.sub_paths, em.domains)
        except MappingError as exc:
            diags.append(Diagnostic("route", str(exc), t.id))
    # always-live storage (no producers) must fit statically
    pred, _ = g.adjacency()
    live = defaultdict(int)
    for t in g.tasks.values():
        if t.kind == "storage" and not pred[t.id] and t.id in m.node_map:
            live[m.node_map[t.id]] += t.size
    for c, total in sorted(live.items(), key=lambda kv: sort_key(kv[0])):
        try:
            p = retrieve(model, c)
        except CoordError:
            continue
        cap = p.params.get("capacity") if isinstance(p, SpacePoint) else None
        if cap is not None and total > cap:
            diags.append(Diagnostic(
                "capacity", f"always-live storage {total} B exceeds capacity {cap} B", format_coord(c)))
    seen_ids = defaultdict(set)
    for s in m.sync_tasks:
        for t in s.before | (s.after or frozenset()):
            if t not in g.tasks:
                diags.append(Diagnostic("sync", f"sync {s.sync_id!r} names unknown task {t!r}", format_coord(s.coord)))
        if s.coord in seen_ids[s.sync_id]:
            diags.append(Diagnostic("sync", f"sync {s.sync_id!r} inserted twice on one point", format_coord(s.coord)))
        seen_ids[s.sync_id].add(s.coord)
    return diags


# --------------------------------------------------------------------------
# mapping files


def mapping_to_dict(m: Mapping) -> Dict:
    out: Dict = {"nodes": {t: format_coord(c) for t, c in m.node_map.items()}}
    if m.edge_maps:
        out["edges"] = {
            e: {
                "path": [format_coord(c) for c in em.path],
                "sub_paths": [[list(w) for w in sp] for sp in em.sub_paths],
                **({"domain": list(em.domains)} if em.domains else {}),
            }
            for e, em in m.edge_maps.items()
        }
    user_syncs = [s for s in m.sync_tasks if not s.generated]
    if user_syncs:
        sy: Dict = {}
        for s in user_syncs:
            entry = sy.setdefault(s.sync_id, [])
            row = {"coord": format_coord(s.coord), "before": sorted(s.before)}
            if s.after is not None:
                row["after"] = sorted(s.after)
            entry.append(row)
        out["sync"] = sy
    if m.time_map:
        out["time"] = {t: list(v) for t, v in m.time_map.items()}
    if m.groups:
        out["groups"] = {n: {"level": grp.level, "members": [format_coord(c) for c in grp.members]}
                         for n, grp in m.groups.items()}
    return out


def mapping_from_dict(data, g: TaskGraph, model: HardwareModel) -> Mapping:
    m = Mapping()
    if data is None:
        return m
    try:
        for t, c in (data.get("nodes") or {}).items():
            m = map_node(m, g, model, t, c)
    except (MappingError, CoordError) as exc:
        raise FormatError(f"{where(data.get('nodes'), t, 'nodes')}: {exc}") from None
    for e, spec in (data.get("edges") or {}).items():
        try:
            m = map_edge(m, g, model, e, spec["path"], spec["sub_paths"], spec.get("domain", ()))
        except (MappingError, CoordError, KeyError) as exc:
            raise FormatError(f"{where(data.get('edges'), e, 'edges')}: {exc}") from None
    for name, spec in (data.get("groups") or {}).items():
        members = spec["members"] if isinstance(spec, dict) else spec
        level = spec.get("level", 2) if isinstance(spec, dict) else 2
        try:
            m = define_group(m, model, name, members, level)
        except (MappingError, CoordError) as exc:
            raise FormatError(f"{where(data.get('groups'), name, 'groups')}: {exc}") from None
    for sid, rows in (data.get("sync") or {}).items():
        try:
            if rows and isinstance(rows[0], dict):
                coords = [r["coord"] for r in rows]
                before = {r["coord"]: r.get("before", []) for r in rows}
                after = {r["coord"]: r["after"] for r in rows if "after" in r}
                m = sync(m, model, sid, coords, before, after)
            else:
                m = sync(m, model, sid, rows)
        except (MappingError, CoordError, KeyError) as exc:
            raise FormatError(f"{where(data.get('sync'), sid, 'sync')}: {exc}") from None
    for t, tm in (data.get("time") or {}).items():
        m = set_time(m, t, tm)
    if m.time_map:
        try:
            m = lower_time_coords(m, g, model)
        except MappingError as exc:
            raise FormatError(f"{where(data, 'time')}: {exc}") from None
    return m


def load_mapping(path, g: TaskGraph, model: HardwareModel) -> Mapping:
    return mapping_from_dict(load_yaml(path), g, model)


def dump_mapping(m: Mapping) -> str:
    return dump_yaml(mapping_to_dict(m))
