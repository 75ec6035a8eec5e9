"""Task-level event-driven simulation."""

from __future__ import annotations

from typing import Optional, Sequence

from .engine import DeadlockError, Scheduler, SimulationError
from .fluid import ContentionGroup, FluidError, detect_contention, simulate_group, water_fill
from .lowering import LoweringError, Program, lower
from .naive import run_naive
from .result import CapacityError, SimulationResult, build_result, canonical_fragments, check_constraints
from .ticks import Tick, TickBoard, activate, evaluate_task


def simulate(model, g, mapping, iterations: int = 1, external_inputs: Optional[Sequence] = None,
             naive: bool = False, check: bool = True) -> SimulationResult:
    """Run ``g`` under ``mapping`` on ``model`` and return the committed schedule.

    With ``naive`` the dependency-order traversal is used instead of the
    consistent scheduler; its constraint violations are reported, not raised.
    """
    prog = lower(model, g, mapping, iterations, external_inputs)
    return run_program(prog, naive=naive, check=check)


def run_program(prog: Program, naive: bool = False, check: bool = True) -> SimulationResult:
    st = run_naive(prog) if naive else Scheduler(prog).run()
    res = build_result(prog, st, naive=naive, check=check)
    if res.violations and not naive:
        raise SimulationError("schedule violates constraints:\n  " + "\n  ".join(res.violations[:10]))
    return res


__all__ = [
    "CapacityError", "ContentionGroup", "DeadlockError", "FluidError", "LoweringError", "Program", "Scheduler",
    "SimulationError", "SimulationResult", "Tick", "TickBoard", "activate", "build_result", "canonical_fragments",
    "check_constraints", "detect_contention", "evaluate_task", "lower", "run_naive", "run_program", "simulate",
    "simulate_group", "water_fill",
]
