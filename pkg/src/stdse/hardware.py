"""Recursive hardware IR: SpaceMatrix containers terminating in SpacePoints.

A hardware description is a nested mapping (usually loaded from YAML)::

    name: chiplet
    dims: [2, 2]
    comm: {pattern: mesh2d, link_bandwidth: 64, hop_latency: 1}
    element:                      # replicated to every position
      point: compute
      params: {throughput: 256, local_bandwidth: 64}

``elements`` (a row-major list) may replace ``element`` for heterogeneous
levels, ``use: <name>`` pulls an entry from the top-level ``templates`` table,
and ``virtual_groups`` names collections of member coordinates (relative to the
matrix that declares them) used as synchronization domains.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .coords import (
    ROOT,
    CommDomain,
    Coord,
    CoordError,
    as_coord,
    flat_index,
    format_coord,
    row_major,
    sort_key,
)
from .diagnostics import Diagnostic
from .evaluators import DEFAULT_EVALUATOR, EvaluatorError, get_evaluator
from .textio import LocDict, load_yaml, where
from .topology import PATTERN_DIMS, TopologySpec

POINT_KINDS = ("compute", "memory", "communication", "absent")
SHARING_MODES = ("exclusive", "shared")


class HardwareError(ValueError):
    pass


@dataclass(frozen=True, eq=True)
class SpacePoint:
    id: str
    kind: str
    params: Dict = field(default_factory=dict)
    evaluator: str = ""
    topology: Optional[TopologySpec] = None
    sharing: str = "exclusive"

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=True)
class SpaceMatrix:
    name: str
    dims: Tuple[int, ...]
    elements: Tuple = ()
    comm_points: Tuple[SpacePoint, ...] = ()
    is_virtual_group: bool = False
    members: Tuple[Coord, ...] = ()
    level: int = 2

    __hash__ = object.__hash__

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def child(self, idx: Tuple[int, ...]):
        return self.elements[flat_index(self.dims, idx)]


Element = Union[SpacePoint, SpaceMatrix]


@dataclass
class HardwareModel:
    root: Element
    depth: int  # spatial levels down to the deepest point; a lone point has depth 0
    virtual_groups: Dict[str, SpaceMatrix]
    description: object = None
    _index: Dict[Coord, Element] = field(default_factory=dict, repr=False)
    _points: List[Tuple[Coord, SpacePoint]] = field(default_factory=list, repr=False)
    _by_id: Dict[str, Coord] = field(default_factory=dict, repr=False)

    def point_coord(self, point_id: str) -> Coord:
        return self._by_id[point_id]

    def summary(self) -> Dict:
        counts: Dict[str, int] = {}
        for _, p in self._points:
            counts[p.kind] = counts.get(p.kind, 0) + 1
        return {"depth": self.depth, "points": dict(sorted(counts.items())),
                "virtual_groups": len(self.virtual_groups)}


# --------------------------------------------------------------------------
# building


def load_hardware(path) -> HardwareModel:
    return build(load_yaml(path))


def build(description, check: bool = True) -> HardwareModel:
    """Instantiate a description into an addressable model.

    With ``check`` the result is validated and any diagnostic raises
    :class:`HardwareError`; ``check=False`` returns the raw model so that
    :func:`validate` can report on it.
    """
    if not isinstance(description, Mapping):
        description = load_yaml(description)
    templates = description.get("templates", {}) or {}
    groups: Dict[str, SpaceMatrix] = {}
    root = _build_node(description, description.get("name", "root") if "dims" in description else "root",
                       ROOT, templates, (), groups, "")
    model = HardwareModel(root=root, depth=0, virtual_groups=groups, description=description)
    _index_model(model)
    if check:
        diags = validate(model)
        if diags:
            raise HardwareError("invalid hardware model:\n  " + "\n  ".join(str(d) for d in diags))
    return model


def _resolve_use(desc, templates, stack, path):
    name = desc["use"]
    if name in stack:
        raise HardwareError(
            f"{where(desc, 'use', path)}: cyclic description via templates {' -> '.join(stack + (name,))}"
        )
    if name not in templates:
        raise HardwareError(f"{where(desc, 'use', path)}: unknown template {name!r}")
    merged = LocDict(templates[name])
    for k, v in desc.items():
        if k != "use":
            merged[k] = v
    merged.line = getattr(desc, "line", None)
    merged.source = getattr(desc, "source", None)
    merged.key_lines = {**getattr(templates[name], "key_lines", {}), **getattr(desc, "key_lines", {})}
    return merged, stack + (name,)


def _build_node(desc, pid, prefix, templates, stack, groups, path):
    if not isinstance(desc, Mapping):
        raise HardwareError(f"{where(desc, None, path)}: expected a mapping, got {type(desc).__name__}")
    while "use" in desc:
        desc, stack = _resolve_use(desc, templates, stack, path)
    if "point" in desc:
        return _build_point(desc, pid, path)
    if "dims" in desc:
        return _build_matrix(desc, pid, prefix, templates, stack, groups, path)
    raise HardwareError(f"{where(desc, None, path)}: element needs 'point' or 'dims'")


def _build_point(desc, pid, path) -> SpacePoint:
    kind = desc["point"]
    if kind not in POINT_KINDS or kind == "communication":
        raise HardwareError(f"{where(desc, 'point', path)}: invalid point kind {kind!r} "
                            "(communication points are declared with 'comm')")
    ev = desc.get("evaluator", DEFAULT_EVALUATOR[kind])
    try:
        model = get_evaluator(ev)
    except EvaluatorError:
        raise HardwareError(f"{where(desc, 'evaluator', path)}: dangling evaluator identifier {ev!r}") from None
    if kind not in model.kinds:
        raise HardwareError(f"{where(desc, 'evaluator', path)}: evaluator {ev!r} does not apply to {kind} points")
    sharing = desc.get("sharing", "exclusive")
    if sharing not in SHARING_MODES:
        raise HardwareError(f"{where(desc, 'sharing', path)}: sharing must be one of {SHARING_MODES}")
    params = dict(desc.get("params", {}) or {})
    if "topology" in desc or "comm" in desc:
        raise HardwareError(f"{where(desc, None, path)}: {kind} points carry no topology")
    return SpacePoint(id=str(desc.get("id", pid)), kind=kind, params=params, evaluator=ev, sharing=sharing)


def _topology(desc, path) -> TopologySpec:
    if not isinstance(desc, Mapping) or "pattern" not in desc:
        raise HardwareError(f"{where(desc, None, path)}: comm needs a 'pattern'")
    if "link_bandwidth" not in desc:
        raise HardwareError(f"{where(desc, None, path)}: comm needs 'link_bandwidth'")
    return TopologySpec(
        pattern=desc["pattern"],
        link_bandwidth=desc["link_bandwidth"],
        hop_latency=desc.get("hop_latency", 0),
        routing=desc.get("routing", "dimension-order"),
    )


def _build_matrix(desc, pid, prefix, templates, stack, groups, path) -> SpaceMatrix:
    dims = desc["dims"]
    if isinstance(dims, int):
        dims = [dims]
    if not dims or any(not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in dims):
        raise HardwareError(f"{where(desc, 'dims', path)}: dims must be a list of positive integers")
    dims = tuple(dims)
    n = math.prod(dims)
    if "elements" in desc:
        items = desc["elements"]
        if not isinstance(items, list) or len(items) != n:
            got = len(items) if isinstance(items, list) else type(items).__name__
            raise HardwareError(
                f"{where(desc, 'elements', path)}: dims {list(dims)} need {n} elements, got {got}"
            )
    elif "element" in desc:
        items = [desc["element"]] * n
    else:
        raise HardwareError(f"{where(desc, None, path)}: matrix needs 'elements' or 'element'")
    children = []
    for k, idx in enumerate(row_major(dims)):
        label = ",".join(map(str, idx))
        sub = f"{path}.elements[{k}]" if path else f"elements[{k}]"
        children.append(
            _build_node(items[k], f"{pid}[{label}]", prefix + (idx,), templates, stack, groups, sub)
        )
    comm = desc.get("comm")
    comm_list = comm if isinstance(comm, list) else ([comm] if comm is not None else [])
    comm_points = []
    for d, cdesc in enumerate(comm_list):
        cpath = f"{path}.comm" if path else "comm"
        topo = _topology(cdesc, cpath)
        ev = cdesc.get("evaluator", "link")
        try:
            em = get_evaluator(ev)
        except EvaluatorError:
            raise HardwareError(f"{where(cdesc, 'evaluator', cpath)}: dangling evaluator identifier {ev!r}") from None
        if "communication" not in em.kinds:
            raise HardwareError(f"{where(cdesc, 'evaluator', cpath)}: evaluator {ev!r} is not a communication model")
        comm_points.append(
            SpacePoint(
                id=str(cdesc.get("id", f"{pid}.comm{d}")),
                kind="communication",
                params={"topology": topo},
                evaluator=ev,
                topology=topo,
                sharing="shared",
            )
        )
    for gname, gdesc in (desc.get("virtual_groups") or {}).items():
        if isinstance(gdesc, Mapping):
            members, level = gdesc.get("members", []), int(gdesc.get("level", 2))
        else:
            members, level = gdesc, 2
        try:
            abs_members = tuple(prefix + as_coord(m) for m in members)
        except CoordError as exc:
            raise HardwareError(f"{where(desc, 'virtual_groups', path)}: group {gname!r}: {exc}") from None
        if gname in groups:
            raise HardwareError(f"{where(desc, 'virtual_groups', path)}: duplicate virtual group {gname!r}")
        groups[gname] = SpaceMatrix(
            name=gname, dims=(len(abs_members),), is_virtual_group=True, members=abs_members, level=level
        )
    return SpaceMatrix(name=str(desc.get("name", pid)), dims=dims, elements=tuple(children),
                       comm_points=tuple(comm_points))


def _index_model(model: HardwareModel) -> None:
    index, points = model._index, model._points
    depth = 0

    def walk(el, c):
        nonlocal depth
        index[c] = el
        if isinstance(el, SpacePoint):
            points.append((c, el))
            depth = max(depth, len(c))
            return
        for idx in row_major(el.dims):
            walk(el.child(idx), c + (idx,))
        for d, cp in enumerate(el.comm_points):
            cc = c + (CommDomain(d),)
            index[cc] = cp
            points.append((cc, cp))

    walk(model.root, ROOT)
    model.depth = depth
    for c, p in points:
        model._by_id.setdefault(p.id, c)


# --------------------------------------------------------------------------
# retrieval


def retrieve(model: HardwareModel, c) -> Element:
    """Element at ``c``; a partial coordinate yields the SpaceMatrix at that prefix."""
    c = as_coord(c)
    hit = model._index.get(c)
    if hit is not None:
        return hit
    el = model.root
    for depth, lv in enumerate(c):
        here = format_coord(c[:depth]) if depth else "root"
        if isinstance(el, SpacePoint):
            raise CoordError(f"{format_coord(c)}: level {depth} descends into point {el.id!r}")
        if isinstance(lv, CommDomain):
            if depth != len(c) - 1:
                raise CoordError(f"{format_coord(c)}: comm domain must be the last level")
            if lv.domain >= len(el.comm_points):
                raise CoordError(f"{format_coord(c)}: no comm domain {lv.domain} at {here}")
            return el.comm_points[lv.domain]
        if len(lv) != el.ndim:
            raise CoordError(
                f"{format_coord(c)}: arity mismatch at level {depth}: {len(lv)} indices for {el.ndim}-D matrix {el.name!r}"
            )
        for i, d in zip(lv, el.dims):
            if not 0 <= i < d:
                raise CoordError(f"{format_coord(c)}: index {lv} out of range {list(el.dims)} at level {depth}")
        el = el.child(lv)
    return el


KindFilter = Union[None, str, Iterable[str], Callable[[SpacePoint], bool]]


def _predicate(kind: KindFilter):
    if kind is None:
        return lambda p: True
    if callable(kind):
        return kind
    if isinstance(kind, str):
        return lambda p: p.kind == kind
    kinds = set(kind)
    return lambda p: p.kind in kinds


def enumerate_points(model: HardwareModel, kind: KindFilter = None, region: Coord = ROOT) -> List[Tuple[Coord, SpacePoint]]:
    """All SpacePoints (under ``region``) matching ``kind``, in lexicographic coordinate order."""
    pred = _predicate(kind)
    region = as_coord(region)
    n = len(region)
    return [(c, p) for c, p in model._points if c[:n] == region and pred(p)]


def gateway(model: HardwareModel, prefix: Coord) -> Coord:
    """Descend from ``prefix`` through the all-zero index until a SpacePoint."""
    c = tuple(prefix)
    el = retrieve(model, c)
    while isinstance(el, SpaceMatrix):
        idx = (0,) * el.ndim
        c = c + (idx,)
        el = el.child(idx)
    return c


# --------------------------------------------------------------------------
# validation


POSITIVE_PARAMS = {
    "compute": ("throughput", "local_bandwidth"),
    "memory": ("capacity", "bandwidth"),
}


def validate(model: HardwareModel) -> List[Diagnostic]:
    diags: List[Diagnostic] = []
    seen: Dict[str, Coord] = {}

    def walk(el, c):
        loc = format_coord(c) if c else "root"
        if isinstance(el, SpacePoint):
            check_point(el, c)
            return
        if el.is_virtual_group and el.comm_points:
            diags.append(Diagnostic("virtual-comm", f"virtual group {el.name!r} owns comm points", loc))
        if len(el.elements) != math.prod(el.dims):
            diags.append(Diagnostic("dims", f"{len(el.elements)} elements for dims {list(el.dims)}", loc))
            return
        for cp in el.comm_points:
            if cp.topology is None:
                diags.append(Diagnostic("topology", f"comm point {cp.id!r} has no topology", loc))
                continue
            for msg in cp.topology.problems(el.ndim):
                diags.append(Diagnostic("topology", f"{cp.id}: {msg}", loc))
            check_point(cp, c)
        for idx in row_major(el.dims):
            walk(el.child(idx), c + (idx,))

    def check_point(p, c):
        loc = format_coord(c) if c else "root"
        if p.id in seen and seen[p.id] != c:
            diags.append(Diagnostic("duplicate-id", f"SpacePoint id {p.id!r} also used at {format_coord(seen[p.id])}", loc))
        seen.setdefault(p.id, c)
        if p.kind not in POINT_KINDS:
            diags.append(Diagnostic("kind", f"unknown kind {p.kind!r}", loc))
        if p.kind != "communication" and p.topology is not None:
            diags.append(Diagnostic("topology", f"{p.kind} point {p.id!r} carries a topology", loc))
        try:
            ev = get_evaluator(p.evaluator)
            if p.kind not in ev.kinds:
                diags.append(Diagnostic("evaluator", f"evaluator {p.evaluator!r} does not apply to {p.kind}", loc))
        except EvaluatorError:
            diags.append(Diagnostic("evaluator", f"dangling evaluator {p.evaluator!r}", loc))
        for key in POSITIVE_PARAMS.get(p.kind, ()):
            if key in p.params:
                v = p.params[key]
                if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)) or v <= 0:
                    diags.append(Diagnostic("param", f"{p.id}: {key} must be a positive number, got {v!r}", loc))

    walk(model.root, ROOT)
    for name, g in sorted(model.virtual_groups.items()):
        for m in g.members:
            try:
                retrieve(model, m)
            except CoordError as exc:
                diags.append(Diagnostic("group-member", f"virtual group {name!r}: {exc}", name))
    return diags


def virtual_group_points(model: HardwareModel, group: SpaceMatrix) -> List[Coord]:
    """Point coordinates covered by a group (members may be whole sub-matrices)."""
    out = []
    for m in group.members:
        el = retrieve(model, m)
        if isinstance(el, SpacePoint):
            out.append(m)
        else:
            out.extend(c for c, _ in enumerate_points(model, region=m))
    return sorted(set(out), key=sort_key)
