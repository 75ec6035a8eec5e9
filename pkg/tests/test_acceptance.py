"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import random
import time
from fractions import Fraction

import pytest

from oracle import run_oracle
from stdse.evaluators import all_reduce_latency, storage_footprint
from stdse.fixtures import (DESK_AXES, SPREAD_SCRIPT, desk_workload, phase_example, random_case,
                            shared_link_example, two_level_mesh)
from stdse.hardware import build, enumerate_points, retrieve
from stdse.mapping import MappingError, decompose_edge
from stdse.simulator import Scheduler, build_result, canonical_fragments, check_constraints, lower, run_naive
from stdse.simulator.ticks import start_end
from stdse.sweep import SweepSpec, rows_to_csv, run_sweep

CORPUS = 1000


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else ""))
        assert ok, f"criterion {n} failed: {detail}"
    return emit


def naive_run():
    model, g, m = shared_link_example()
    prog = lower(model, g, m)
    return build_result(prog, run_naive(prog), naive=True)


def consistent_run():
    model, g, m = shared_link_example()
    prog = lower(model, g, m)
    return prog, build_result(prog, Scheduler(prog).run())


def oracle_mismatches(prog, res):
    start, end, frags = run_oracle(prog)
    bad = []
    for x in prog.instances:
        r = res.tasks[x.name]
        if (r.start, r.end) != (start[x.idx], end[x.idx]):
            bad.append(f"{x.name}: got [{r.start}, {r.end}] oracle [{start[x.idx]}, {end[x.idx]}]")
        elif x.kind == "flow" and canonical_fragments(r.fragments) != frags[x.idx]:
            bad.append(f"{x.name}: fragments differ")
    return bad


def corpus_runs():
    for seed in range(CORPUS):
        model, g, m = random_case(seed)
        prog = lower(model, g, m)
        st = Scheduler(prog).run()
        yield seed, prog, st


def desk_sweep():
    spec = SweepSpec(base=two_level_mesh(), workload=desk_workload(), axes=DESK_AXES, script=SPREAD_SCRIPT)
    return spec, rows_to_csv(spec, run_sweep(spec))


def test_criterion_01_naive_traversal(report):
    t0 = time.perf_counter()
    res = naive_run()
    dt = time.perf_counter() - t0
    t = res.task_times()
    got = (t["A"][1], t["B"][1], t["F"][1])
    report(1, "naive traversal on the shared-link fixture", got == (200, 300, 450) and dt < 1,
           f"t_A, t_B, t_F = {got}, {dt:.3f}s")


def test_criterion_02_consistent_vs_oracle(report):
    t0 = time.perf_counter()
    prog, res = consistent_run()
    bad = oracle_mismatches(prog, res) + res.violations
    dt = time.perf_counter() - t0
    report(2, "shared-link fixture matches the fluid oracle", not bad and dt < 1,
           f"{len(bad)} mismatches, makespan {res.makespan}, {dt:.3f}s")


def test_criterion_03_constraint_suite(report):
    t0 = time.perf_counter()
    bad = []
    for seed, prog, st in corpus_runs():
        bad += [f"seed {seed}: {v}" for v in check_constraints(prog, st)]
    dt = time.perf_counter() - t0
    report(3, f"constraints on {CORPUS} random graphs", not bad and dt < 60,
           f"{len(bad)} violations, {dt:.2f}s" + (f", first: {bad[0]}" if bad else ""))


def test_criterion_04_oracle_equivalence(report):
    bad = []
    for seed, prog, st in corpus_runs():
        res = build_result(prog, st)
        bad += [f"seed {seed}: {v}" for v in oracle_mismatches(prog, res)]
        for x in prog.instances:
            if x.kind == "flow" and sum(f.work for f in st.frags[x.idx]) != x.work:
                bad.append(f"seed {seed}: {x.name} fragment work does not sum to the task")
    report(4, f"oracle equivalence on {CORPUS} random graphs", not bad,
           f"{len(bad)} mismatches" + (f", first: {bad[0]}" if bad else ""))


def test_criterion_05_tick_and_storage_rules(report):
    rng = random.Random(5)
    bad = 0
    for _ in range(2000):
        ticks = [Fraction(rng.randint(0, 400), rng.randint(1, 4)) for _ in range(rng.randint(0, 5))]
        now = Fraction(rng.randint(0, 400), rng.randint(1, 4))
        dur = Fraction(rng.randint(0, 100), rng.randint(1, 3))
        ref_start = max(ticks + [now])
        if start_end(ticks, now, dur) != (ref_start, ref_start + dur):
            bad += 1
        # storage lives from its first tick to its last access, or to the horizon when never read
        ins = ticks or [now]
        acc = [max(ins) + rng.randint(0, 50) for _ in range(rng.randint(0, 3))]
        horizon = max(ins + acc) + rng.randint(0, 50)
        lt = storage_footprint(64, ins, acc, horizon)
        want = (min(ins), max(acc) if acc else horizon, not acc)
        if (lt.start, lt.end, lt.leaked) != want:
            bad += 1
    report(5, "Start/End and storage survival against reference expressions", bad == 0, f"{bad} mismatches")


def test_criterion_06_all_reduce(report):
    rng = random.Random(6)
    bad = 0
    for _ in range(1000):
        n = rng.randint(1, 64)
        L = Fraction(rng.randint(0, 1000), rng.randint(1, 8))
        S = rng.randint(0, 1 << 24)
        B = Fraction(rng.randint(1, 1 << 12), rng.randint(1, 8))
        ref = (n - 1) * L + Fraction((n - 1) * S) / (n * B) + L + Fraction(2 * S) / B
        if all_reduce_latency(n, L, S, B) != ref:
            bad += 1
    fixed = all_reduce_latency(4, 1, 4096, 1024)
    report(6, "all-reduce closed form", bad == 0 and fixed == 15, f"{bad} mismatches, n=4 case {fixed}")


def _dimension_order(a, b):
    wps = [a]
    if a[1] != b[1]:
        wps.append((a[0], b[1]))
    if wps[-1] != b:
        wps.append(b)
    return wps


def test_criterion_07_map_edge_law(report):
    model = build(two_level_mesh())
    pts = [c for c, p in enumerate_points(model) if p.kind != "communication"]
    rng = random.Random(7)
    bad = []
    for trial in range(500):
        n = rng.randint(2, 6)
        path = [rng.choice(pts)]
        while len(path) < n:
            c = rng.choice(pts)
            if c != path[-1]:
                path.append(c)
        subs = []
        for a, b in zip(path, path[1:]):
            k = 0 if a[0] != b[0] else 1
            subs.append(_dimension_order(a[k], b[k]))
        out = decompose_edge(model, "e", path, subs)
        if len(out) != n - 1:
            bad.append(f"trial {trial}: {n} coordinates gave {len(out)} sub-tasks")
        if any(retrieve(model, s.comm_coord).kind != "communication" for s in out):
            bad.append(f"trial {trial}: a sub-task is not on a communication point")
        for wrong in (subs[:-1], subs + [subs[-1]]):
            try:
                decompose_edge(model, "e", path, wrong)
                bad.append(f"trial {trial}: {len(wrong)} sub-paths accepted for {n} coordinates")
            except MappingError as exc:
                if "length mismatch" not in str(exc):
                    bad.append(f"trial {trial}: wrong error {exc}")
    report(7, "N critical coordinates give N-1 sub-tasks", not bad,
           f"{len(bad)} failures" + (f", first: {bad[0]}" if bad else ""))


def test_criterion_08_sync_semantics(report):
    model, g, m = phase_example((1, 0))
    prog = lower(model, g, m)
    res = build_result(prog, Scheduler(prog).run())
    t = res.task_times()
    fence = max(t[f"p{k}"][1] for k in range(4))
    first_q = min(t[f"q{k}"][0] for k in range(4))
    fenced = bool(m.sync_tasks) and first_q >= fence
    model, g, m2 = phase_example((0, 2))
    prog = lower(model, g, m2)
    t2 = build_result(prog, Scheduler(prog).run()).task_times()
    # with no barrier the core that finished phase one first moves on at once
    free = not m2.sync_tasks and t2["q0"][0] == t2["p0"][1] < max(t2[f"p{k}"][1] for k in range(4))
    report(8, "time-coordinate transitions and barriers", fenced and free,
           f"(1,0): first q at {first_q}, fence {fence}; (0,2): q0 at {t2['q0'][0]}, {len(m2.sync_tasks)} barriers")


@pytest.fixture(scope="module")
def sweep_once():
    t0 = time.perf_counter()
    spec, text = desk_sweep()
    return spec, text, time.perf_counter() - t0


def test_criterion_09_sweep_budget(report, sweep_once):
    spec, text, dt = sweep_once
    rows = text.splitlines()[1:]
    ok_rows = sum(1 for r in rows if ",ok," in r)
    report(9, "240-point sweep of a 200-task workload on a 2-level 4x4 model",
           len(spec.points()) == 240 and len(desk_workload().tasks) == 200 and ok_rows == 240 and dt < 120,
           f"{ok_rows}/{len(rows)} rows ok, {dt:.1f}s")


def test_criterion_10_determinism(report, sweep_once):
    diffs = []
    if naive_run().trace_jsonl() != naive_run().trace_jsonl():
        diffs.append("criterion 1 trace")
    if consistent_run()[1].trace_jsonl() != consistent_run()[1].trace_jsonl():
        diffs.append("criterion 2 trace")
    first = [build_result(p, st).trace_jsonl() for _, p, st in corpus_runs()]
    second = [build_result(p, st).trace_jsonl() for _, p, st in corpus_runs()]
    if first != second:
        diffs.append("corpus traces")
    if desk_sweep()[1] != sweep_once[1]:
        diffs.append("sweep table")
    report(10, "repeated runs are byte-identical", not diffs, ", ".join(diffs) or "traces and sweep table equal")
