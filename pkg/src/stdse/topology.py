"""Interconnect patterns: adjacency, hop expansion and default routes.

Sub-paths are given as waypoint lists of index tuples inside one SpaceMatrix.
Consecutive waypoints must lie on a straight line of the pattern (one
differing dimension on meshes and tori, a direct link on buses and
fully-connected fabrics, a parent/child pair on trees); they are expanded into
unit hops, each hop traversing one physical link.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

Index = Tuple[int, ...]
Link = Tuple

PATTERNS = ("mesh2d", "torus2d", "torus3d", "ring", "bus", "tree", "fully-connected")
ROUTINGS = ("dimension-order", "shortest-path")

# required dimensionality per pattern; None means any
PATTERN_DIMS = {
    "mesh2d": 2,
    "torus2d": 2,
    "torus3d": 3,
    "ring": 1,
    "tree": 1,
    "bus": None,
    "fully-connected": None,
}


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    pattern: str
    link_bandwidth: float
    hop_latency: float = 0
    routing: str = "dimension-order"

    def problems(self, ndim: int) -> List[str]:
        out = []
        if self.pattern not in PATTERNS:
            out.append(f"unknown topology pattern {self.pattern!r}")
        else:
            want = PATTERN_DIMS[self.pattern]
            if want is not None and want != ndim:
                out.append(
                    f"pattern {self.pattern} needs a {want}-D SpaceMatrix, got {ndim}-D"
                )
        if self.routing not in ROUTINGS:
            out.append(f"unknown routing {self.routing!r}")
        if not self.link_bandwidth > 0:
            out.append("link_bandwidth must be > 0")
        if self.hop_latency < 0:
            out.append("hop_latency must be >= 0")
        return out


def _wrapped(pattern: str) -> bool:
    return pattern in ("torus2d", "torus3d", "ring")


def _tree_parent(i: int) -> int:
    return (i - 1) // 2


def link_of(spec: TopologySpec, a: Index, b: Index) -> Link:
    """Physical link used by a unit hop; every bus hop shares one medium."""
    if spec.pattern == "bus":
        return ("bus",)
    return (a, b)


def adjacent(spec: TopologySpec, dims: Sequence[int], a: Index, b: Index) -> bool:
    if a == b:
        return False
    p = spec.pattern
    if p in ("bus", "fully-connected"):
        return True
    if p == "tree":
        return (a[0] > 0 and _tree_parent(a[0]) == b[0]) or (
            b[0] > 0 and _tree_parent(b[0]) == a[0]
        )
    diff = [k for k in range(len(dims)) if a[k] != b[k]]
    if len(diff) != 1:
        return False
    k = diff[0]
    step = abs(a[k] - b[k])
    if step == 1:
        return True
    return _wrapped(p) and dims[k] > 2 and step == dims[k] - 1


def _straight_hops(spec: TopologySpec, dims: Sequence[int], a: Index, b: Index) -> List[Tuple[Index, Index]]:
    diff = [k for k in range(len(dims)) if a[k] != b[k]]
    if len(diff) != 1:
        raise RoutingError(
            f"waypoints {a} -> {b} are not aligned on one dimension of {spec.pattern}"
        )
    k = diff[0]
    n = dims[k]
    fwd = (b[k] - a[k]) % n
    if _wrapped(spec.pattern):
        step = 1 if fwd <= n - fwd else -1
        count = fwd if step == 1 else n - fwd
    else:
        step = 1 if b[k] > a[k] else -1
        count = abs(b[k] - a[k])
    hops = []
    cur = list(a)
    for _ in range(count):
        nxt = list(cur)
        nxt[k] = (cur[k] + step) % n
        hops.append((tuple(cur), tuple(nxt)))
        cur = nxt
    return hops


def expand_hops(spec: TopologySpec, dims: Sequence[int], waypoints: Sequence[Index]) -> List[Tuple[Index, Index]]:
    """Expand a waypoint list into unit hops; raises on non-adjacent segments."""
    for w in waypoints:
        if len(w) != len(dims) or any(not 0 <= i < d for i, d in zip(w, dims)):
            raise RoutingError(f"waypoint {w} outside matrix of dims {list(dims)}")
    hops: List[Tuple[Index, Index]] = []
    for a, b in zip(waypoints, waypoints[1:]):
        if a == b:
            continue
        if spec.pattern in ("bus", "fully-connected"):
            hops.append((a, b))
        elif spec.pattern == "tree":
            if not adjacent(spec, dims, a, b):
                raise RoutingError(f"tree waypoints {a} -> {b} are not parent/child")
            hops.append((a, b))
        else:
            hops.extend(_straight_hops(spec, dims, a, b))
    return hops


def default_waypoints(spec: TopologySpec, dims: Sequence[int], a: Index, b: Index) -> List[Index]:
    """Default intra-level route: dimension-order on grids, direct elsewhere."""
    if a == b:
        return [a]
    p = spec.pattern
    if p in ("bus", "fully-connected", "ring"):
        return [a, b]
    if p == "tree":
        up_a, up_b = [a[0]], [b[0]]
        while up_a[-1] > 0:
            up_a.append(_tree_parent(up_a[-1]))
        while up_b[-1] > 0:
            up_b.append(_tree_parent(up_b[-1]))
        common = next(x for x in up_a if x in up_b)
        chain = up_a[: up_a.index(common) + 1] + list(reversed(up_b[: up_b.index(common)]))
        return [(x,) for x in chain]
    pts = [a]
    cur = list(a)
    for k in range(len(dims)):
        if cur[k] != b[k]:
            cur[k] = b[k]
            pts.append(tuple(cur))
    return pts
