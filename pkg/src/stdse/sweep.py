"""Parameter sweeps: one simulation per point of a cross-product of axes.

A sweep file names a base hardware description, a workload, a primitive
script (or a mapping file) and a list of axes::

    base: hw.yaml
    workload: transformer.yaml
    script: spread.map
    iterations: 1
    axes:
      - path: comm.link_bandwidth
        values: [16, 32, 64]
      - path: templates.core.params.throughput
        values: [128, 256]

Paths are dotted keys into the base description; ``[k]`` indexes a list
(``element.elements[2].params.throughput``).  Relative file names resolve
against the sweep file's directory.
"""

from __future__ import annotations

import copy
import csv
import io
import itertools
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .coords import format_coord
from .evaluators import EvaluatorError
from .hardware import HardwareError, build, enumerate_points
from .mapping import MappingError, mapping_from_dict
from .primitives import PrimitiveError, initial_state, replay, run_script
from .simulator import SimulationError, run_program
from .simulator.lowering import LoweringError, lower
from .simulator.result import CapacityError, num
from .taskgraph import TaskGraph, graph_from_dict
from .textio import FormatError, load_yaml


class SweepError(ValueError):
    pass


@dataclass
class SweepSpec:
    base: dict
    workload: TaskGraph
    axes: List[Tuple[str, List]]
    script: str = ""
    mapping: Optional[dict] = None
    iterations: int = 1
    source: str = "<sweep>"

    def points(self) -> List[Tuple]:
        """Design points in lexicographic axis order (first axis varies slowest)."""
        return list(itertools.product(*(vals for _, vals in self.axes)))


_STEP = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _steps(path: str) -> List:
    out, pos = [], 0
    for m in _STEP.finditer(path):
        if m.start() != pos and path[pos:m.start()] != ".":
            raise SweepError(f"bad parameter path {path!r}")
        out.append(m.group(1) if m.group(1) is not None else int(m.group(2)))
        pos = m.end()
    if not out or pos != len(path):
        raise SweepError(f"bad parameter path {path!r}")
    return out


def get_path(desc, path: str):
    cur = desc
    for st in _steps(path):
        try:
            cur = cur[st]
        except (KeyError, IndexError, TypeError):
            raise SweepError(f"parameter path {path!r} does not resolve (at {st!r})") from None
    return cur


def set_path(desc, path: str, value):
    """Copy of ``desc`` with the value at ``path`` replaced."""
    get_path(desc, path)
    out = copy.deepcopy(desc)
    *head, last = _steps(path)
    cur = out
    for st in head:
        cur = cur[st]
    cur[last] = value
    return out


def load_sweep(path) -> SweepSpec:
    path = Path(path)
    data = load_yaml(path)
    if not isinstance(data, dict):
        raise FormatError(f"{path}: sweep file must be a mapping")
    here = path.parent

    def ref(key, required=True):
        if key not in data:
            if required:
                raise FormatError(f"{path}: sweep needs {key!r}")
            return None
        return here / str(data[key])

    base = load_yaml(ref("base"))
    workload = graph_from_dict(load_yaml(ref("workload")))
    script_path, mapping_path = ref("script", False), ref("mapping", False)
    axes = []
    for k, ax in enumerate(data.get("axes") or []):
        try:
            p, vals = str(ax["path"]), list(ax["values"])
        except (KeyError, TypeError):
            raise FormatError(f"{path}: axes[{k}] needs 'path' and 'values'") from None
        if not vals:
            raise FormatError(f"{path}: axes[{k}] ({p}) has no values")
        try:
            get_path(base, p)
        except SweepError as exc:
            raise FormatError(f"{path}: axes[{k}]: {exc}") from None
        axes.append((p, vals))
    return SweepSpec(
        base=base,
        workload=workload,
        axes=axes,
        script=script_path.read_text() if script_path else "",
        mapping=load_yaml(mapping_path) if mapping_path else None,
        iterations=int(data.get("iterations", 1)),
        source=str(path),
    )


def run_point(spec: SweepSpec, values: Sequence) -> Dict:
    """Simulate one design point; failures become a row with ``status=failed``."""
    row: Dict = {p: v for (p, _), v in zip(spec.axes, values)}
    try:
        desc = spec.base
        for (p, _), v in zip(spec.axes, values):
            desc = set_path(desc, p, v)
        model = build(desc)
        if spec.mapping is not None:
            lineage = spec.mapping.get("lineage") or []
            g = replay(lineage, spec.workload, model).graph if lineage else spec.workload
            m = mapping_from_dict(spec.mapping, g, model)
        else:
            st = run_script(spec.script, initial_state(spec.workload, model), spec.source)
            g, m = st.graph, st.mapping
        prog = lower(model, g, m, iterations=spec.iterations)
        res = run_program(prog)
    except (HardwareError, FormatError, MappingError, PrimitiveError, LoweringError, SimulationError,
            CapacityError, SweepError, EvaluatorError) as exc:
        row.update(status="failed", error=" ".join(l.strip() for l in str(exc).splitlines()))
        return row
    util = res.utilization
    comp = [util.get(format_coord(c), 0) for c, _ in enumerate_points(model, "compute")]
    comm = [util.get(format_coord(c), 0) for c, _ in enumerate_points(model, "communication")]
    row.update(
        status="ok",
        makespan=num(res.makespan),
        compute_util_mean=_fmt(sum(comp) / len(comp) if comp else 0),
        compute_util_max=_fmt(max(comp, default=0)),
        comm_util_max=_fmt(max(comm, default=0)),
        error="",
    )
    return row


def _fmt(x) -> str:
    return f"{float(x):.6f}"


def _run_one(args):
    spec, values = args
    return run_point(spec, values)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> List[Dict]:
    pts = spec.points()
    if jobs > 1 and len(pts) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_one, [(spec, v) for v in pts], chunksize=max(1, len(pts) // (4 * jobs))))
    return [run_point(spec, v) for v in pts]


RESULT_COLUMNS = ["status", "makespan", "compute_util_mean", "compute_util_max", "comm_util_max", "error"]


def rows_to_csv(spec: SweepSpec, rows: List[Dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=[p for p, _ in spec.axes] + RESULT_COLUMNS, lineterminator="\n",
                       restval="")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
