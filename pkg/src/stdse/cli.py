"""Command-line front end: build, map, simulate, sweep, evaluators.

Exit codes: 0 success, 1 bad input or failed validation, 2 the simulation
could not finish (deadlock, memory overflow), 3 the schedule violates the
timing or resource constraints (only reachable with ``--naive-traversal``),
4 a sweep finished with failed rows.

``STDSE_OUTPUT_DIR`` is the one environment setting: when set, relative
output paths are resolved against it.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path

from .coords import format_coord
from .diagnostics import errors
from .evaluators import EvaluatorError, list_evaluators
from .hardware import HardwareError, build, enumerate_points, validate
from .mapping import MappingError, auto_route_all, mapping_from_dict, mapping_to_dict, validate_mapping
from .primitives import PrimitiveError, auto_route, initial_state, replay, run_script
from .simulator import DeadlockError, SimulationError, run_program
from .simulator.lowering import CycleError, LoweringError, lower
from .simulator.result import CapacityError
from .sweep import load_sweep, rows_to_csv, run_sweep
from .taskgraph import GraphError, dump_workload, load_workload, validate_graph
from .textio import FormatError, dump_yaml, load_yaml

OUTPUT_DIR_ENV = "STDSE_OUTPUT_DIR"

INPUT_ERRORS = (FormatError, EvaluatorError, HardwareError, GraphError, MappingError, PrimitiveError, LoweringError, OSError)


def _out_path(p) -> Path:
    p = Path(p)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write(p, text: str) -> None:
    _out_path(p).write_text(text)


def _err(msg: str) -> None:
    print(f"stdse: {msg}", file=sys.stderr)


# --------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    desc = load_yaml(args.hardware)
    try:
        model = build(desc, check=False)
    except HardwareError as exc:
        _err(str(exc))
        return 1
    diags = validate(model)
    for d in diags:
        print(f"{args.hardware}: {d}", file=sys.stderr)
    if errors(diags):
        return 1
    summ = model.summary()
    print(f"depth={summ['depth']}")
    for kind, n in summ["points"].items():
        print(f"{kind}={n}")
    if summ["virtual_groups"]:
        print(f"virtual_groups={summ['virtual_groups']}")
    if args.dump_coords:
        for c, p in enumerate_points(model):
            print(f"{format_coord(c)}\t{p.kind}\t{p.id}")
    return 0


def _load_inputs(hw_path, wl_path):
    model = build(load_yaml(hw_path))
    g = load_workload(wl_path)
    diags = errors(validate_graph(g))
    if diags:
        raise GraphError(f"{wl_path}: invalid workload:\n  " + "\n  ".join(map(str, diags)))
    return model, g


def cmd_map(args) -> int:
    model, g = _load_inputs(args.hardware, args.workload)
    script = Path(args.script).read_text() if args.script else ""
    start = initial_state(g, model)
    prior = []
    if args.base:
        prior = (load_yaml(args.base) or {}).get("lineage") or []
        g, m = load_mapped(model, g, args.base)
        start = initial_state(g, model, m)
    s = run_script(script, start, args.script or "<script>")
    if args.auto_route:
        s = auto_route(s)
    diags = validate_mapping(s.mapping, s.graph, model) + validate_graph(s.graph)
    for d in diags:
        print(f"{args.script or args.base or args.workload}: {d}", file=sys.stderr)
    doc = mapping_to_dict(s.mapping)
    lineage = list(prior) + [r.as_dict() for r in s.lineage]
    if lineage:
        doc["lineage"] = lineage
    text = dump_yaml(doc)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    if args.workload_out:
        _write(args.workload_out, dump_workload(s.graph))
    return 1 if errors(diags) else 0


def load_mapped(model, g, mapping_path):
    """Workload graph and mapping from a mapping file, replaying its lineage."""
    data = load_yaml(mapping_path)
    lineage = (data or {}).get("lineage") or []
    if lineage:
        g = replay(lineage, g, model).graph
    return g, mapping_from_dict(data, g, model)


def cmd_simulate(args) -> int:
    model, g = _load_inputs(args.hardware, args.workload)
    g, m = load_mapped(model, g, args.mapping)
    if args.auto_route:
        m = auto_route_all(m, g, model)
    diags = errors(validate_mapping(m, g, model))
    if diags:
        for d in diags:
            print(f"{args.mapping}: {d}", file=sys.stderr)
        return 1
    try:
        prog = lower(model, g, m, iterations=args.iterations)
        res = run_program(prog, naive=args.naive_traversal)
    except CapacityError as exc:
        _err(str(exc))
        if args.report_out:
            _write(args.report_out, json.dumps({"error": str(exc), "memory": exc.report}, indent=2,
                                               sort_keys=True) + "\n")
        return 2
    except (DeadlockError, CycleError) as exc:
        _err(str(exc))
        return 2
    except SimulationError as exc:
        _err(str(exc))
        return 3
    if args.trace_out:
        _write(args.trace_out, res.trace_jsonl())
    report = res.summary_json()
    if args.report_out:
        _write(args.report_out, report)
        print(f"makespan={json.loads(report)['makespan']}")
    else:
        sys.stdout.write(report)
    for v in res.violations:
        print(f"violation: {v}", file=sys.stderr)
    return 3 if res.violations else 0


def cmd_sweep(args) -> int:
    spec = load_sweep(args.sweep)
    rows = run_sweep(spec, jobs=args.jobs)
    text = rows_to_csv(spec, rows)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        _err(f"{len(failed)} of {len(rows)} design points failed")
        return 4
    return 0


def cmd_evaluators(args) -> int:
    for ev in list_evaluators():
        print(f"{ev.name}\t{','.join(sorted(ev.kinds))}\t{ev.description}")
    return 0


# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stdse", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized drivers (default 0)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="validate a hardware description and summarize it")
    p.add_argument("hardware")
    p.add_argument("--dump-coords", action="store_true", help="list every SpacePoint coordinate")
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("map", help="run a primitive script and write the mapping")
    p.add_argument("hardware")
    p.add_argument("workload")
    p.add_argument("script", nargs="?", help="primitive script (empty when omitted)")
    p.add_argument("-o", "--output", help="mapping file (stdout when omitted)")
    p.add_argument("--auto-route", action="store_true", help="give every unrouted transfer its default route")
    p.add_argument("--base", help="start from this mapping instead of an empty one")
    p.add_argument("--workload-out", help="also write the transformed workload")
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("simulate", help="simulate a mapped workload")
    p.add_argument("hardware")
    p.add_argument("workload")
    p.add_argument("mapping")
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--naive-traversal", action="store_true",
                   help="dependency-order traversal without contention handling (for comparison)")
    p.add_argument("--auto-route", action="store_true")
    p.add_argument("--trace-out", help="JSON-lines trace of committed fragments")
    p.add_argument("--report-out", help="JSON summary (stdout when omitted)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate every point of a parameter sweep, emit CSV")
    p.add_argument("sweep")
    p.add_argument("-o", "--output", help="CSV file (stdout when omitted)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (row order is unaffected)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("evaluators", help="evaluation models")
    esub = p.add_subparsers(dest="action", required=True)
    e = esub.add_parser("list")
    e.set_defaults(fn=cmd_evaluators)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    random.seed(args.seed)
    try:
        return args.fn(args)
    except INPUT_ERRORS as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
