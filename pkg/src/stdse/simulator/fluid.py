"""Fluid bandwidth sharing: max-min fair rates, contention groups, group simulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Hashable, List, Sequence, Tuple


class FluidError(ValueError):
    pass


def water_fill(flows: Sequence[Sequence[Hashable]], capacities: Dict[Hashable, object]) -> List[Fraction]:
    """Max-min fair rates for ``flows`` (each a collection of resources).

    Progressive filling: repeatedly find the resource with the smallest equal
    share among its unfrozen flows, freeze those flows at that share, and
    charge it to every resource they cross.  Exact for rational inputs.
    """
    n = len(flows)
    rates: List = [None] * n
    cap = {}
    users: Dict[Hashable, List[int]] = {}
    for i, rs in enumerate(flows):
        if not rs:
            raise FluidError(f"flow {i} uses no resource")
        for r in rs:
            users.setdefault(r, []).append(i)
            cap[r] = Fraction(capacities[r])
    for r, c in cap.items():
        if c <= 0:
            raise FluidError(f"resource {r!r} has zero bandwidth")
    left = n
    while left:
        best = None
        for r in sorted(users, key=repr):
            k = sum(1 for i in users[r] if rates[i] is None)
            if k:
                share = cap[r] / k
                if best is None or share < best:
                    best = share
        for r in sorted(users, key=repr):
            live = [i for i in users[r] if rates[i] is None]
            if live and cap[r] / len(live) == best:
                for i in live:
                    if rates[i] is None:
                        rates[i] = best
                        left -= 1
                        for r2 in flows[i]:
                            cap[r2] -= best
    return rates


def components(items: Sequence, resources_of) -> List[List]:
    """Partition ``items`` into maximal groups linked by shared resources."""
    parent = list(range(len(items)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: Dict[Hashable, int] = {}
    for i, it in enumerate(items):
        for r in resources_of(it):
            if r in owner:
                a, b = find(i), find(owner[r])
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                owner[r] = i
    groups: Dict[int, List] = {}
    for i, it in enumerate(items):
        groups.setdefault(find(i), []).append(it)
    return [groups[k] for k in sorted(groups)]


@dataclass
class ContentionGroup:
    members: List[str]
    resources: Tuple = ()


def detect_contention(tasks: Dict[str, Sequence[Hashable]]) -> List[ContentionGroup]:
    """Group task ids whose resource sets overlap (transitively)."""
    names = sorted(tasks)
    out = []
    for comp in components(names, lambda t: tasks[t]):
        res = sorted({r for t in comp for r in tasks[t]}, key=repr)
        out.append(ContentionGroup(comp, tuple(res)))
    return out


@dataclass
class GroupStep:
    """One fluid interval of a contention group."""

    t0: object
    t1: object
    rates: Dict[str, Fraction]
    work: Dict[str, Fraction]
    finished: List[str]
    remaining: Dict[str, Fraction] = field(default_factory=dict)


def simulate_group(t0, remaining: Dict[str, object], resources: Dict[str, Sequence[Hashable]],
                   capacities: Dict[Hashable, object], horizon=None) -> GroupStep:
    """Run the group from ``t0`` until its earliest finisher (or ``horizon``).

    Returns the interval, the work each member did, who finished and the
    unfinished volume of every truncated member.
    """
    names = sorted(remaining)
    rates = dict(zip(names, water_fill([resources[n] for n in names], capacities)))
    dt = min(Fraction(remaining[n]) / rates[n] for n in names)
    if horizon is not None and horizon - t0 < dt:
        dt = Fraction(horizon - t0)
    t1 = t0 + dt
    work, left, fin = {}, {}, []
    for n in names:
        w = rates[n] * dt
        r = remaining[n] - w
        work[n] = w
        if r == 0:
            fin.append(n)
        else:
            left[n] = r
    return GroupStep(t0, t1, rates, work, fin, left)


def fluid_run(flows: Dict[str, Tuple[object, object, Sequence[Hashable]]], capacities) -> Dict[str, list]:
    """Simulate independent flows ``{name: (arrival, work, resources)}`` in isolation.

    Returns ``{name: [(start, end, work), ...]}`` fragments.  Used by the naive
    traversal, which co-simulates only the flows issued in the same layer.
    """
    pending = {n: [Fraction(a), Fraction(w)] for n, (a, w, _) in flows.items()}
    frags: Dict[str, list] = {n: [] for n in flows}
    res = {n: tuple(r) for n, (_, _, r) in flows.items()}
    for n, (a, w, _) in flows.items():
        if w == 0:
            frags[n].append((Fraction(a), Fraction(a), Fraction(0)))
            del pending[n]
    while pending:
        t = min(a for a, _ in pending.values())
        live = {n: v[1] for n, v in pending.items() if v[0] <= t}
        later = [v[0] for n, v in pending.items() if v[0] > t]
        horizon = min(later) if later else None
        # all live flows restart together at t, so group-wise simulation is exact
        step_end = None
        steps = []
        for grp in detect_contention({n: res[n] for n in live}):
            st = simulate_group(t, {n: live[n] for n in grp.members}, res, capacities, horizon)
            steps.append(st)
            step_end = st.t1 if step_end is None else min(step_end, st.t1)
        for st in steps:
            # cut every group at the earliest event so all live flows stay in sync
            dt = step_end - t
            for n in st.rates:
                w = st.rates[n] * dt
                frags[n].append((t, step_end, w))
                pending[n][1] -= w
                pending[n][0] = step_end
                if pending[n][1] == 0:
                    del pending[n]
    return _merge(frags)


def _merge(frags):
    """Join consecutive fragments with no gap (pure bookkeeping cuts)."""
    out = {}
    for n, fs in frags.items():
        merged = []
        for f in fs:
            if merged and merged[-1][1] == f[0] and f[2] and merged[-1][2] and _same_rate(merged[-1], f):
                s, _, w = merged[-1]
                merged[-1] = (s, f[1], w + f[2])
            else:
                merged.append(f)
        out[n] = merged
    return out


def _same_rate(a, b):
    return a[2] * (b[1] - b[0]) == b[2] * (a[1] - a[0])
