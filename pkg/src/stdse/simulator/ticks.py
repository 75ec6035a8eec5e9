"""Tick tokens, per-edge tick FIFOs and the single-task start/end rule.

The engines track ticks implicitly (an instance per iteration, arrival =
latest committed input end); this module is the explicit form of the same
rules, used for unit checks and by anyone driving a point by hand.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

from .result import CapacityError

Edge = Tuple[Hashable, Hashable]


@dataclass(frozen=True, order=True)
class Tick:
    iteration: int
    timestamp: object


class TickError(RuntimeError):
    pass


@dataclass
class TickBoard:
    """FIFO of ticks per dependency edge.

    Sticky edges (outputs of storage tasks) keep their tick after a read:
    the stored tensor stays available for every later access.
    """

    queues: Dict[Edge, deque] = field(default_factory=dict)
    sticky: set = field(default_factory=set)
    fired: Dict[Edge, int] = field(default_factory=dict)
    consumed: Dict[Edge, int] = field(default_factory=dict)
    _last: Dict[Edge, Tick] = field(default_factory=dict)

    def fire(self, edge: Edge, tick: Tick) -> None:
        last = self._last.get(edge)
        if last is not None and (tick.iteration < last.iteration or tick.timestamp < last.timestamp):
            raise TickError(f"edge {edge}: tick {tick} fired after {last}")
        self.queues.setdefault(edge, deque()).append(tick)
        self.fired[edge] = self.fired.get(edge, 0) + 1
        self._last[edge] = tick

    def peek(self, edge: Edge, iteration: int) -> Optional[Tick]:
        q = self.queues.get(edge)
        if not q:
            return None
        if edge in self.sticky:
            return q[-1]
        return q[0] if q[0].iteration == iteration else None

    def consume(self, edge: Edge, iteration: int) -> Tick:
        t = self.peek(edge, iteration)
        if t is None:
            raise TickError(f"edge {edge}: no tick for iteration {iteration}")
        if edge not in self.sticky:
            self.queues[edge].popleft()
            self.consumed[edge] = self.consumed.get(edge, 0) + 1
        return t

    def pending(self, edge: Edge) -> int:
        return 0 if edge in self.sticky else len(self.queues.get(edge, ()))

    def conserved(self) -> bool:
        """Fired = consumed + pending on every non-sticky edge."""
        return all(
            self.fired.get(e, 0) == self.consumed.get(e, 0) + self.pending(e)
            for e in set(self.fired) | set(self.consumed)
            if e not in self.sticky
        )


def activate(board: TickBoard, inputs: Sequence[Edge], iteration: int = 0,
             external: Optional[Tick] = None) -> bool:
    """True iff every input edge holds a tick of ``iteration``.

    A source task (no inputs) activates on an external input tick.
    """
    if not inputs:
        return external is not None and external.iteration == iteration
    return all(board.peek(e, iteration) is not None for e in inputs)


def start_end(input_times: Iterable, t_current, duration) -> Tuple[object, object]:
    """``Start = max(input tick times, t_current)``, ``End = Start + duration``."""
    start = max([t_current, *input_times])
    return start, start + duration


@dataclass
class PointTimer:
    point: str
    t_current: object = 0


def evaluate_task(timer: PointTimer, board: TickBoard, inputs: Sequence[Edge], outputs: Sequence[Edge],
                  duration, iteration: int = 0, external: Optional[Tick] = None):
    """Consume one tick per input, run, fire one tick per output at End."""
    if not activate(board, inputs, iteration, external):
        raise TickError(f"task on {timer.point} evaluated before activation (iteration {iteration})")
    times = [board.consume(e, iteration).timestamp for e in inputs]
    if external is not None and not inputs:
        times.append(external.timestamp)
    start, end = start_end(times, timer.t_current, duration)
    timer.t_current = end
    for e in outputs:
        board.fire(e, Tick(iteration, end))
    return start, end


@dataclass
class MemoryPool:
    """Live storage on one memory point; claims past capacity abort."""

    point: str
    capacity: Optional[int] = None
    live: Dict[str, int] = field(default_factory=dict)

    @property
    def used(self) -> int:
        return sum(self.live.values())

    def claim(self, task: str, size: int) -> None:
        if self.capacity is not None and self.used + size > self.capacity:
            raise CapacityError(
                f"memory {self.point}: claiming {size} B for {task} exceeds capacity "
                f"({self.used} of {self.capacity} B in use)"
            )
        self.live[task] = size

    def release(self, task: str) -> None:
        self.live.pop(task, None)
