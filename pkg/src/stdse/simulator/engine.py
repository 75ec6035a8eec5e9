"""Hardware-consistent dynamic task scheduler.

The engine works in rounds.  Each round

1. activates every instance whose inputs are all committed (its arrival is
   the latest input tick, or its release time for sources), rolling back
   staged results the newcomer could overlap;
2. issues everything that is ready: exclusive tasks run FIFO on their point,
   flows are co-simulated in contention groups until the earliest finisher
   or the next known contender arrival, remainders go back on the queue;
3. commits staged results whose outcome can no longer change, i.e. every
   not-yet-activated potential contender provably arrives too late.

Staged results live in the contention-staged buffer until committed; only
committed results fire ticks, so rollback never has to undo downstream work.
When no staged result passes the commit test the earliest-finishing one is
committed anyway, which is safe because nothing unrevealed can arrive before
the earliest uncommitted end.
"""

from __future__ import annotations

import heapq
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

from .fluid import components, simulate_group
from .lowering import Program


class SimulationError(RuntimeError):
    pass


class DeadlockError(SimulationError):
    pass


@dataclass
class Fragment:
    start: object
    end: object
    work: object
    group: int = -1
    committed: bool = False


@dataclass
class _Group:
    gid: int
    t0: object
    t1: object
    members: List[int]
    resources: frozenset
    finished: List[int]
    alive: bool = True


@dataclass
class Stats:
    rounds: int = 0
    rollbacks: int = 0
    forced: int = 0
    groups: int = 0


@dataclass
class EngineState:
    start: list
    end: list
    arrival: list
    frags: list
    commit_seq: list
    stats: Stats = field(default_factory=Stats)
    trace: list = field(default_factory=list)
    ticks: tuple = (0, 0)


def _norm(x):
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x)
    return x


class Scheduler:
    def __init__(self, prog: Program):
        self.p = prog
        inst = prog.instances
        n = len(inst)
        self.n = n
        self.done = [False] * n
        self.active = [False] * n
        self.missing = [len(i.preds) for i in inst]
        self.arrival = [None] * n
        self.start = [None] * n
        self.end = [None] * n
        self.key = [None] * n
        self.frags: List[List[Fragment]] = [[] for _ in range(n)]
        self.cwork = [0] * n  # committed work of flows
        self.seq = [None] * n
        self.nseq = 0
        self.ndone = 0
        self.stats = Stats()
        self.queue = deque()
        # exclusive points
        self.ready: Dict[str, list] = defaultdict(list)
        self.staged: Dict[str, List[int]] = defaultdict(list)
        self.timer: Dict[str, object] = defaultdict(int)
        self.waiting_on: Dict[str, set] = defaultdict(set)
        # flows
        self.pending: list = []
        self.pver = [0] * n
        self.pstart = [None] * n
        self.prem = [None] * n
        self.groups: Dict[int, _Group] = {}
        self.res_groups: Dict[object, set] = defaultdict(set)
        self.res_waiting: Dict[object, set] = defaultdict(set)
        self.res_of = [frozenset(i.resources) for i in inst]
        self.gid = 0
        self.fired = 0
        self.consumed = 0
        self.trace: List[tuple] = []
        for i in inst:
            if i.kind == "exclusive":
                self.waiting_on[i.point_id].add(i.idx)
            elif i.kind == "flow":
                for r in i.resources:
                    self.res_waiting[r].add(i.idx)
        self.point_order = sorted(
            {i.point_id for i in inst if i.kind == "exclusive"}, key=lambda pid: _coord_key(prog, pid)
        )

    # -- keys ----------------------------------------------------------------

    def _key(self, i: int, arrival):
        x = self.p.instances[i]
        return (arrival, x.depth, x.iteration, x.base)

    # -- activation ------------------------------------------------------------

    def _activate(self, i: int):
        x = self.p.instances[i]
        a = x.release if x.release is not None else 0
        for q in x.preds:
            if self.end[q] > a:
                a = self.end[q]
        self.arrival[i] = a
        self.active[i] = True
        if x.kind == "virtual":
            self.start[i] = a
            self.trace.append((i, 0, a, a))
            self._commit(i, a)
        elif x.kind == "exclusive":
            pid = x.point_id
            self.waiting_on[pid].discard(i)
            k = self._key(i, a)
            self.key[i] = k
            st = self.staged[pid]
            j = len(st)
            while j and self.key[st[j - 1]] > k:
                j -= 1
            if j < len(st):
                self.stats.rollbacks += 1
                for v in st[j:]:
                    self.start[v] = self.end[v] = None
                    heapq.heappush(self.ready[pid], (self.key[v], v))
                del st[j:]
            heapq.heappush(self.ready[pid], (k, i))
        else:
            for r in x.resources:
                self.res_waiting[r].discard(i)
            self.key[i] = self._key(i, a)
            self._push_pending(i, a, x.work)

    def _push_pending(self, i, t, rem, check=True):
        self.pver[i] += 1
        self.pstart[i] = t
        self.prem[i] = rem
        heapq.heappush(self.pending, (t, self.key[i], i, self.pver[i]))
        if not check:
            return
        hit = self._hits(i, t)
        if hit:
            self.stats.rollbacks += 1
            self._rollback_groups(hit)

    def _hits(self, i, t):
        """Staged groups that flow ``i``, running again from ``t``, could overlap."""
        hit = set()
        for r in self.res_of[i]:
            for g in self.res_groups[r]:
                if self.groups[g].t1 > t:
                    hit.add(g)
        return hit

    def _rollback_groups(self, gids):
        """Undo staged groups until no reset flow overlaps a surviving one."""
        todo = set(gids)
        reset = set()
        while todo:
            g = min(todo)
            todo.discard(g)
            G = self.groups.pop(g, None)
            if G is None:
                continue
            for r in G.resources:
                self.res_groups[r].discard(g)
            for m in G.members:
                fr = self.frags[m]
                k = next((k for k, f in enumerate(fr) if f.group == g), None)
                if k is None:
                    continue
                if fr[k].committed:
                    raise SimulationError(f"rollback of committed fragment of {self.p.instances[m].name}")
                for f in fr[k + 1:]:
                    if f.group in self.groups:
                        todo.add(f.group)
                t = fr[k].start
                del fr[k:]
                self.end[m] = None
                self.prem[m] = None
                self.pver[m] += 1
                reset.add(m)
                todo |= self._hits(m, t)
        for m in sorted(reset):
            fr = self.frags[m]
            t = fr[-1].end if fr else self.arrival[m]
            self.start[m] = fr[0].start if fr else None
            self._push_pending(m, t, self.p.instances[m].work - sum(f.work for f in fr), check=False)

    # -- issue -----------------------------------------------------------------

    def _issue(self):
        inst = self.p.instances
        for pid in self.point_order:
            rq = self.ready[pid]
            if not rq:
                continue
            st = self.staged[pid]
            t = self.end[st[-1]] if st else self.timer[pid]
            while rq:
                _, v = heapq.heappop(rq)
                s = self.arrival[v] if self.arrival[v] > t else t
                self.start[v] = s
                t = self.end[v] = s + inst[v].duration
                st.append(v)
        heap = self.pending
        while heap:
            t0 = heap[0][0]
            now = []
            while heap and heap[0][0] == t0:
                _, _, i, ver = heapq.heappop(heap)
                if ver == self.pver[i] and self.prem[i] is not None:
                    now.append(i)
            if not now:
                continue
            for comp in components(sorted(now, key=lambda i: self.key[i]), lambda i: self.res_of[i]):
                self._issue_group(t0, comp)

    def _issue_group(self, t0, comp):
        inst = self.p.instances
        res = frozenset().union(*(self.res_of[i] for i in comp))
        horizon = None
        for (t, _, j, ver) in self.pending:
            if ver == self.pver[j] and self.prem[j] is not None and t > t0 and self.res_of[j] & res:
                if horizon is None or t < horizon:
                    horizon = t
        rem = {i: self.prem[i] for i in comp}
        step = simulate_group(t0, rem, {i: inst[i].resources for i in comp}, self.p.capacities, horizon)
        self.gid += 1
        g = self.gid
        self.stats.groups += 1
        t1 = _norm(step.t1)
        G = _Group(g, t0, t1, sorted(comp), res, sorted(step.finished))
        self.groups[g] = G
        for r in res:
            self.res_groups[r].add(g)
        for i in comp:
            self.prem[i] = None
            self.pver[i] += 1
            if not self.frags[i]:
                self.start[i] = t0
            self.frags[i].append(Fragment(t0, t1, _norm(step.work[i]), g))
        for i in step.finished:
            self.end[i] = _norm(t1 + inst[i].latency)
        for i in sorted(step.remaining, key=lambda i: self.key[i]):
            self._push_pending(i, t1, step.remaining[i])

    # -- lower bounds ----------------------------------------------------------

    def _lb_end(self, i, memo):
        """Earliest possible end of instance ``i`` (iterative DFS, memoized per round)."""
        inst = self.p.instances
        stack = [i]
        while stack:
            u = stack[-1]
            if u in memo:
                stack.pop()
                continue
            if self.done[u]:
                memo[u] = self.end[u]
                stack.pop()
                continue
            x = inst[u]
            if self.active[u]:
                memo[u] = self._lb_active(u)
                stack.pop()
                continue
            need = [q for q in x.preds if q not in memo]
            if need:
                stack.extend(need)
                continue
            stack.pop()
            a = self._lb_arr_from(u, memo)
            memo[u] = self._lb_from_arrival(u, a)
        return memo[i]

    def _lb_arr_from(self, u, memo):
        x = self.p.instances[u]
        a = x.release if x.release is not None else 0
        for q in x.preds:
            if memo[q] > a:
                a = memo[q]
        return a

    def _lb_from_arrival(self, u, a):
        x = self.p.instances[u]
        if x.kind == "virtual":
            return a
        if x.kind == "exclusive":
            t = self.timer[x.point_id]
            return (a if a > t else t) + x.duration
        return a + Fraction(x.work) / x.min_cap + x.latency

    def _lb_active(self, u):
        x = self.p.instances[u]
        if x.kind == "exclusive":
            return self.end[u] if self.end[u] is not None else self._lb_from_arrival(u, self.arrival[u])
        if x.kind == "virtual":
            return self.arrival[u]
        s = None
        for f in self.frags[u]:
            if not f.committed:
                s = f.start
                break
        if s is None:
            s = self.pstart[u] if self.prem[u] is not None else self.frags[u][-1].end
        return s + Fraction(x.work - self.cwork[u]) / x.min_cap + x.latency

    def _lb_arrival(self, u, memo):
        x = self.p.instances[u]
        for q in x.preds:
            self._lb_end(q, memo)
        return self._lb_arr_from(u, memo)

    # -- commit ----------------------------------------------------------------

    def _commit(self, i, end):
        x = self.p.instances[i]
        self.done[i] = True
        self.ndone += 1
        self.end[i] = end
        self.seq[i] = self.nseq
        self.nseq += 1
        self.consumed += len(x.preds)
        self.fired += len(x.succs)
        for s in x.succs:
            self.missing[s] -= 1
            if self.missing[s] == 0:
                self.queue.append(s)

    def _commit_exclusive(self, v):
        x = self.p.instances[v]
        st = self.staged[x.point_id]
        assert st[0] == v
        st.pop(0)
        self.timer[x.point_id] = self.end[v]
        self.trace.append((v, 0, self.start[v], self.end[v]))
        self._commit(v, self.end[v])

    def _commit_group(self, G: _Group):
        del self.groups[G.gid]
        for r in G.resources:
            self.res_groups[r].discard(G.gid)
        for m in G.members:
            for k, f in enumerate(self.frags[m]):
                if f.group == G.gid:
                    f.committed = True
                    self.cwork[m] += f.work
                    self.trace.append((m, k, f.start, f.end))
                    break
        for m in G.finished:
            self._commit(m, self.end[m])

    def _group_ready(self, G: _Group):
        for m in G.members:
            for f in self.frags[m]:
                if f.group == G.gid:
                    break
                if not f.committed:
                    return False
        return True

    def _commit_pass(self) -> bool:
        inst = self.p.instances
        memo: Dict[int, object] = {}
        any_commit = False
        for pid in self.point_order:
            st = self.staged[pid]
            while st:
                v = st[0]
                kv = self.key[v]
                dv = inst[v].desc
                ok = True
                for u in self.waiting_on[pid]:
                    if (dv >> u) & 1:
                        continue
                    xu = inst[u]
                    if (self._lb_arrival(u, memo), xu.depth, xu.iteration, xu.base) < kv:
                        ok = False
                        break
                if not ok:
                    break
                self._commit_exclusive(v)
                any_commit = True
        # an open group can still be rolled back and stretched, so later
        # groups on any of its resources have to wait for it
        blocked = set()
        for G in sorted(self.groups.values(), key=lambda G: (G.t0, G.gid)):
            if not self._group_ready(G) or not blocked.isdisjoint(G.resources):
                blocked |= G.resources
                continue
            desc = 0
            for m in G.members:
                desc |= inst[m].desc
            ok = True
            for r in G.resources:
                for u in self.res_waiting[r]:
                    if (desc >> u) & 1:
                        continue
                    if self._lb_arrival(u, memo) < G.t1:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                self._commit_group(G)
                any_commit = True
            else:
                blocked |= G.resources
        return any_commit

    def _force(self) -> bool:
        """Commit the staged result(s) with the smallest end time."""
        cands = []
        for pid in self.point_order:
            st = self.staged[pid]
            if st:
                cands.append((self.end[st[0]], 1, self.key[st[0]], st[0]))
        for G in self.groups.values():
            if self._group_ready(G):
                cands.append((G.t1, 0, (G.t0, G.gid), G))
        if not cands:
            return False
        emin = min(c[0] for c in cands)
        self.stats.forced += 1
        safe = False
        for c in sorted((c for c in cands if c[0] == emin), key=lambda c: (c[1], c[2])):
            if c[1] == 0:
                self._commit_group(c[3])
                safe = True
            elif self.arrival[c[3]] < emin:
                self._commit_exclusive(c[3])
                safe = True
        if not safe:
            risky = min((c for c in cands if c[0] == emin), key=lambda c: c[2])
            self._commit_exclusive(risky[3])
        return True

    # -- main loop -------------------------------------------------------------

    def run(self) -> EngineState:
        inst = self.p.instances
        for i in range(self.n):
            if self.missing[i] == 0:
                self.queue.append(i)
        while self.ndone < self.n:
            self.stats.rounds += 1
            while self.queue:
                self._activate(self.queue.popleft())
            self._issue()
            committed = self._commit_pass()
            if self.ndone == self.n:
                break
            if not committed and not self.queue:
                if not self._force():
                    self._deadlock()
        for i in range(self.n):
            if inst[i].kind == "flow" and self.frags[i]:
                self.start[i] = self.frags[i][0].start
        return EngineState(self.start, self.end, self.arrival, self.frags, self.seq, self.stats,
                           self.trace, (self.fired, self.consumed))

    def _deadlock(self):
        inst = self.p.instances
        waiting = [i for i in range(self.n) if not self.done[i]]
        lines = []
        for i in waiting[:20]:
            blockers = [inst[q].name for q in inst[i].preds if not self.done[q]]
            lines.append(f"{inst[i].name} waits for {', '.join(blockers) or '(nothing)'}")
        raise DeadlockError("no task can make progress:\n  " + "\n  ".join(lines))


def _coord_key(prog: Program, pid):
    from ..coords import sort_key

    return sort_key(prog.point_coords[pid])
