"""Simulation results: per-task times, invariant checks, traces and reports."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from ..coords import format_coord
from ..evaluators import storage_footprint
from .engine import EngineState
from .lowering import Program


class CapacityError(RuntimeError):
    """A memory point holds more live storage than its capacity."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


def num(x):
    """JSON-friendly exact number: ints stay ints, other rationals become ``"p/q"``."""
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return x


@dataclass
class TaskRecord:
    name: str
    task: str
    base: str
    iteration: int
    kind: str
    point: Optional[str]
    start: object
    end: object
    fragments: List[Tuple] = field(default_factory=list)
    seq: int = 0


@dataclass
class SimulationResult:
    tasks: Dict[str, TaskRecord]
    makespan: object
    trace: List[Dict]
    utilization: Dict[str, object]
    memory: Dict[str, Dict]
    link_contention: Dict[str, object]
    violations: List[str]
    stats: Dict[str, int]
    naive: bool = False

    def times(self) -> Dict[str, Tuple]:
        return {n: (r.start, r.end) for n, r in self.tasks.items()}

    def end_of(self, name: str):
        return self.tasks[name].end

    def task_times(self, iteration: int = 0) -> Dict[str, Tuple]:
        """(Start, End) per workload task; a split transfer spans its sub-tasks."""
        out: Dict[str, list] = {}
        for r in self.tasks.values():
            if r.iteration != iteration and r.name != r.base:
                continue
            cur = out.get(r.task)
            if cur is None:
                out[r.task] = [r.start, r.end]
            else:
                cur[0], cur[1] = min(cur[0], r.start), max(cur[1], r.end)
        return {k: tuple(v) for k, v in out.items() if not k.startswith("sync:")}

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.trace)

    def summary(self) -> Dict:
        iters = sorted({r.iteration for r in self.tasks.values()})
        return {
            "mode": "naive" if self.naive else "consistent",
            "makespan": num(self.makespan),
            "iterations": len(iters),
            "workload": [
                {t: {"start": num(s), "end": num(e)} for t, (s, e) in sorted(self.task_times(k).items())}
                for k in iters
            ],
            "tasks": {n: {"start": num(r.start), "end": num(r.end)} for n, r in sorted(self.tasks.items())},
            "utilization": {k: num(v) for k, v in sorted(self.utilization.items())},
            "memory": self.memory,
            "link_contention": {k: num(v) for k, v in sorted(self.link_contention.items())},
            "violations": list(self.violations),
            "stats": dict(self.stats),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def canonical_fragments(frags):
    """Merge touching fragments that run at the same rate.

    Engines may cut a fragment at bookkeeping events (a horizon that turned
    out not to change any rate); merging gives a unique representation.
    """
    out = []
    for s, e, w in frags:
        if out:
            ps, pe, pw = out[-1]
            if pe == s and e > s and pe > ps and pw * (e - s) == w * (pe - ps):
                out[-1] = (ps, e, pw + w)
                continue
        out.append((s, e, w))
    return out


def _union_length(intervals):
    total, cur_s, cur_e = 0, None, None
    for s, e in sorted(intervals):
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        elif e > cur_e:
            cur_e = e
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def check_constraints(prog: Program, st: EngineState) -> List[str]:
    """Dependency, resource and ordering constraints on a finished schedule."""
    inst = prog.instances
    bad = []
    for x in inst:
        i = x.idx
        if st.end[i] is None or st.commit_seq[i] is None:
            bad.append(f"{x.name}: never committed")
            continue
        if x.release is not None and st.start[i] < x.release:
            bad.append(f"C1 {x.name}: start {st.start[i]} before release {x.release}")
        for q in x.preds:
            if st.end[q] is not None and st.start[i] < st.end[q]:
                bad.append(f"C1 {x.name}: start {st.start[i]} before end {st.end[q]} of {inst[q].name}")
            if st.commit_seq[q] is not None and st.commit_seq[q] >= st.commit_seq[i]:
                bad.append(f"C3 {x.name}: committed before its predecessor {inst[q].name}")
        if x.kind == "flow":
            w = sum(f.work for f in st.frags[i])
            if w != x.work:
                bad.append(f"work {x.name}: fragments carry {w}, task has {x.work}")
    if bad:
        return bad
    # exclusive points: no overlap, timers never go back
    by_point = defaultdict(list)
    for x in inst:
        if x.kind == "exclusive":
            by_point[x.point_id].append(x.idx)
    for pid, ids in sorted(by_point.items()):
        last_end = None
        for i in sorted(ids, key=lambda i: st.commit_seq[i]):
            if last_end is not None:
                if st.end[i] < last_end:
                    bad.append(f"timer {inst[i].name}: point timer moves back from {last_end} to {st.end[i]}")
                if st.start[i] < last_end and st.end[i] > st.start[i]:
                    bad.append(f"C2 {inst[i].name}: starts at {st.start[i]} while point busy until {last_end}")
            last_end = st.end[i] if last_end is None or st.end[i] > last_end else last_end
    # shared resources: summed fragment rates never exceed capacity
    events = defaultdict(list)
    for x in inst:
        if x.kind != "flow":
            continue
        for f in st.frags[x.idx]:
            if f.end > f.start:
                rate = Fraction(f.work) / (f.end - f.start)
                for r in x.resources:
                    events[r].append((f.start, rate, x.name))
                    events[r].append((f.end, -rate, x.name))
    for r, evs in events.items():
        load, cap = 0, prog.capacities[r]
        evs.sort(key=lambda e: (e[0], e[1]))
        for t, d, name in evs:
            load += d
            if d > 0 and load > cap:
                bad.append(f"C2 {name}: resource {_res_name(r)} loaded {load} > capacity {cap} at t={t}")
                break
    fired, consumed = st.ticks
    if fired != consumed:
        bad.append(f"ticks: fired {fired} != consumed {consumed}")
    return bad


def _res_name(r) -> str:
    owner, what = r
    if isinstance(what, str):
        return f"{owner}.{what}"
    if what == ("bus",):
        return f"{owner}:bus"
    a, b = what
    return f"{owner}:({','.join(map(str, a))})->({','.join(map(str, b))})"


def _memory(prog: Program, st: EngineState, makespan):
    inst = prog.instances
    lifetimes = defaultdict(dict)
    for x in inst:
        if x.role != "storage":
            continue
        ticks = [st.end[q] for q in x.preds] or [x.release or 0]
        acc = [st.end[s] for s in x.succs]
        lt = storage_footprint(x.size, ticks, acc, horizon=makespan)
        lifetimes[x.point_id][x.name] = lt
    report = {}
    for pid in sorted(lifetimes, key=lambda p: format_coord(prog.point_coords[p])):
        lts = lifetimes[pid]
        evs = []
        for name, lt in lts.items():
            evs.append((lt.start, 1, lt.size, name))
            evs.append((lt.end, 0, -lt.size, name))
        cur = peak = 0
        peak_t, live = 0, set()
        cap = prog.points[pid].params.get("capacity")
        overflow = None
        for t, _, d, name in sorted(evs, key=lambda e: (e[0], e[1], e[3])):
            cur += d
            if d > 0:
                live.add(name)
            else:
                live.discard(name)
            if cur > peak:
                peak, peak_t = cur, t
            if cap is not None and cur > cap and overflow is None:
                overflow = (t, cur, sorted(live))
        coord = format_coord(prog.point_coords[pid])
        report[coord] = {
            "peak": num(peak),
            "peak_time": num(peak_t),
            "capacity": cap,
            "lifetimes": {n: [num(lt.start), num(lt.end)] for n, lt in sorted(lts.items())},
            "leaked": sorted(n for n, lt in lts.items() if lt.leaked),
        }
        if overflow is not None:
            t, cur, names = overflow
            raise CapacityError(
                f"memory {coord}: {cur} B live at t={num(t)} exceeds capacity {cap} B "
                f"(live: {', '.join(names)})",
                report,
            )
    return report


def build_result(prog: Program, st: EngineState, naive: bool = False, check: bool = True) -> SimulationResult:
    inst = prog.instances
    makespan = max((e for e in st.end if e is not None), default=0)
    tasks = {}
    for x in inst:
        i = x.idx
        point = format_coord(x.coord) if x.coord is not None else None
        fr = [(f.start, f.end, f.work) for f in st.frags[i]]
        tasks[x.name] = TaskRecord(x.name, x.task, x.base, x.iteration, x.kind, point, st.start[i], st.end[i], fr,
                                   st.commit_seq[i])
    trace = []
    for i, k, s, e in st.trace:
        x = inst[i]
        trace.append({
            "task": x.name,
            "point": format_coord(x.coord) if x.coord is not None else None,
            "iteration": x.iteration,
            "fragment": k,
            "start": num(s),
            "end": num(e),
            "status": "committed",
        })
    util: Dict[str, object] = {}
    busy = defaultdict(list)
    for x in inst:
        if x.coord is None or x.kind == "virtual":
            continue
        if x.kind == "exclusive":
            busy[x.point_id].append((st.start[x.idx], st.end[x.idx]))
        else:
            busy[x.point_id].extend((f.start, f.end) for f in st.frags[x.idx])
    for pid, iv in busy.items():
        key = format_coord(prog.point_coords[pid])
        util[key] = Fraction(_union_length(iv)) / makespan if makespan else 0
    contention: Dict[str, object] = {}
    per_res = defaultdict(list)
    for x in inst:
        if x.kind == "flow":
            for f in st.frags[x.idx]:
                for r in x.resources:
                    per_res[r].append((f.start, f.end))
    for r, iv in per_res.items():
        evs = sorted([(s, 1) for s, e in iv] + [(e, -1) for s, e in iv], key=lambda e: (e[0], e[1]))
        level, last, total = 0, None, 0
        for t, d in evs:
            if level >= 2:
                total += t - last
            level += d
            last = t
        if total:
            contention[_res_name(r)] = total
    violations = check_constraints(prog, st) if check else []
    memory = _memory(prog, st, makespan)
    stats = {"rounds": st.stats.rounds, "rollbacks": st.stats.rollbacks, "forced_commits": st.stats.forced,
             "groups": st.stats.groups, "instances": len(inst)}
    return SimulationResult(tasks, makespan, trace, util, memory, contention, violations, stats, naive)
