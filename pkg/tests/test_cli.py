import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from stdse.cli import main
from stdse.fixtures import board_example, line_chip, shared_link_example, two_level_mesh
from stdse.mapping import mapping_to_dict
from stdse.taskgraph import Task, TaskGraph, dump_workload, transformer_graph
from stdse.textio import dump_yaml


@pytest.fixture
def files(tmp_path):
    model, g, m = shared_link_example()
    (tmp_path / "hw.yaml").write_text(dump_yaml(line_chip(3)))
    (tmp_path / "wl.yaml").write_text(dump_workload(g))
    (tmp_path / "map.yaml").write_text(dump_yaml(mapping_to_dict(m)))
    return tmp_path


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_build_summary(files, capsys):
    rc, out, err = run(capsys, "build", files / "hw.yaml", "--dump-coords")
    assert rc == 0
    assert out.startswith("depth=1\n")
    assert "compute=3" in out and "communication=1" in out
    assert "((0,2))\tcompute" in out


def test_build_four_level_board(tmp_path, capsys):
    (tmp_path / "board.yaml").write_text(dump_yaml(board_example()))
    rc, out, err = run(capsys, "build", tmp_path / "board.yaml")
    assert rc == 0
    assert out.splitlines()[:4] == ["depth=4", "communication=41", "compute=24", "memory=40"]


def test_build_reports_locus(tmp_path, capsys):
    (tmp_path / "hw.yaml").write_text("name: x\ndims: [3]\nelements:\n  - {point: compute}\n  - {point: compute}\n")
    rc, out, err = run(capsys, "build", tmp_path / "hw.yaml")
    assert rc == 1
    assert "hw.yaml:3" in err and "need 3 elements" in err


def test_build_rejects_bad_param(tmp_path, capsys):
    desc = line_chip(2)
    desc["element"]["params"]["throughput"] = 0
    (tmp_path / "hw.yaml").write_text(dump_yaml(desc))
    rc, out, err = run(capsys, "build", tmp_path / "hw.yaml")
    assert rc == 1 and "throughput must be a positive number" in err and "((0,0))" in err


def test_simulate_naive_and_consistent(files, capsys):
    rc, out, err = run(capsys, "simulate", files / "hw.yaml", files / "wl.yaml", files / "map.yaml",
                       "--naive-traversal")
    assert rc == 3 and "violation: C2" in err
    rep = json.loads(out)
    assert rep["mode"] == "naive"
    assert rep["tasks"]["A#0@0"]["end"] == 200
    assert rep["tasks"]["B@0"]["end"] == 300
    assert rep["tasks"]["F#1@0"]["end"] == 450
    rc, out, err = run(capsys, "simulate", files / "hw.yaml", files / "wl.yaml", files / "map.yaml")
    assert rc == 0 and err == ""
    rep = json.loads(out)
    assert rep["makespan"] == 501 and rep["tasks"]["F#1@0"]["end"] == 500


def test_simulate_iterations_and_outputs(files, capsys, monkeypatch):
    out_dir = files / "out"
    monkeypatch.setenv("STDSE_OUTPUT_DIR", str(out_dir))
    rc, out, err = run(capsys, "simulate", files / "hw.yaml", files / "wl.yaml", files / "map.yaml",
                       "--iterations", 3, "--trace-out", "t.jsonl", "--report-out", "r.json")
    assert rc == 0
    assert out.startswith("makespan=")
    rep = json.loads((out_dir / "r.json").read_text())
    assert rep["iterations"] == 3 and len(rep["workload"]) == 3
    lines = (out_dir / "t.jsonl").read_text().splitlines()
    assert {json.loads(l)["iteration"] for l in lines} == {0, 1, 2}
    # byte-identical on a rerun
    first = (out_dir / "t.jsonl").read_text()
    run(capsys, "simulate", files / "hw.yaml", files / "wl.yaml", files / "map.yaml",
        "--iterations", 3, "--trace-out", "t.jsonl", "--report-out", "r.json")
    assert (out_dir / "t.jsonl").read_text() == first


def capacity_case(tmp_path, produced):
    desc = {"name": "c", "dims": [2], "comm": {"pattern": "bus", "link_bandwidth": 1000},
            "elements": [{"point": "compute", "params": {"throughput": 1}},
                         {"point": "memory", "params": {"capacity": 1000}}]}
    g = TaskGraph()
    nodes = {"z": "(0)"}
    g.add_task(Task("z", "compute", ops=1))
    for k in range(2):
        g.add_task(Task(f"s{k}", "storage", size=600))
        g.add_dependency(f"s{k}", "z")
        nodes[f"s{k}"] = "(1)"
        if produced:
            g.add_task(Task(f"p{k}", "compute", ops=1))
            g.add_dependency(f"p{k}", f"s{k}", 0)
            nodes[f"p{k}"] = "(0)"
    (tmp_path / "hw.yaml").write_text(dump_yaml(desc))
    (tmp_path / "wl.yaml").write_text(dump_workload(g))
    (tmp_path / "m.yaml").write_text(dump_yaml({"nodes": nodes}))
    return [tmp_path / "hw.yaml", tmp_path / "wl.yaml", tmp_path / "m.yaml"]


def test_simulate_capacity_overflow(tmp_path, capsys):
    # storage written at run time: overflow is found by the simulation
    rc, out, err = run(capsys, "simulate", *capacity_case(tmp_path, True), "--report-out", tmp_path / "r.json")
    assert rc == 2 and "exceeds capacity" in err
    assert "(1)" in json.loads((tmp_path / "r.json").read_text())["memory"]
    # storage live from the start: overflow is a validation error
    rc, out, err = run(capsys, "simulate", *capacity_case(tmp_path, False))
    assert rc == 1 and "always-live storage 1200 B exceeds capacity 1000 B" in err


def test_map_script_roundtrip(files, capsys):
    (files / "tf.yaml").write_text(dump_workload(transformer_graph(8, 2, layers=1)))
    (files / "hw4.yaml").write_text(dump_yaml(two_level_mesh()))
    (files / "s.map").write_text(
        "# two tiles of the first matmul\n"
        "tile_task L0.qkv 2\n"
        "assign x0,L0.W* root round-robin\n"
        "assign L0.qkv[*],L0.score,L0.softmax,L0.av,L0.proj,L0.up,L0.act,L0.down root round-robin\n"
        "barrier L0.softmax\n"
        "auto_route\n")
    rc, out, err = run(capsys, "map", files / "hw4.yaml", files / "tf.yaml", files / "s.map", "-o",
                       files / "m.yaml")
    assert rc == 0, err
    text = (files / "m.yaml").read_text()
    assert "lineage:" in text and "L0.qkv[0]" in text
    rc, out, err = run(capsys, "simulate", files / "hw4.yaml", files / "tf.yaml", files / "m.yaml")
    assert rc == 0, err
    rep = json.loads(out)
    assert "L0.qkv[1]@0" in rep["tasks"]


def test_map_error_has_line(files, capsys):
    (files / "bad.map").write_text("# comment\n\nplace Zed ((0,0))\n")
    rc, out, err = run(capsys, "map", files / "hw.yaml", files / "wl.yaml", files / "bad.map")
    assert rc == 1
    assert "bad.map:3: place: unknown task 'Zed'" in err


def test_simulate_unmapped_is_validation_error(files, capsys):
    (files / "empty.yaml").write_text("nodes: {}\n")
    rc, out, err = run(capsys, "simulate", files / "hw.yaml", files / "wl.yaml", files / "empty.yaml")
    assert rc == 1 and "E: compute task is not placed" in err


def test_sweep_command(files, capsys, monkeypatch):
    g = TaskGraph()
    for t in ("a", "b"):
        g.add_task(Task(t, "compute", ops=4))
    g.add_task(Task("ab", "communication", volume=8))
    g.add_dependency("a", "ab")
    g.add_dependency("ab", "b")
    (files / "tf.yaml").write_text(dump_workload(g))
    (files / "s.map").write_text("assign a,b root round-robin\nauto_route\n")
    (files / "sw.yaml").write_text(dump_yaml({
        "base": "hw.yaml", "workload": "tf.yaml", "script": "s.map",
        "axes": [{"path": "comm.link_bandwidth", "values": [1, 2]},
                 {"path": "element.params.throughput", "values": [1, 0]}]}))
    monkeypatch.setenv("STDSE_OUTPUT_DIR", str(files / "o"))
    rc, out, err = run(capsys, "sweep", files / "sw.yaml", "-o", "rows.csv")
    assert rc == 4 and "2 of 4 design points failed" in err
    rows = list(csv.DictReader(io.StringIO((files / "o" / "rows.csv").read_text())))
    assert [(r["comm.link_bandwidth"], r["element.params.throughput"], r["status"]) for r in rows] == [
        ("1", "1", "ok"), ("1", "0", "failed"), ("2", "1", "ok"), ("2", "0", "failed")]


def test_evaluators_list(capsys):
    rc, out, err = run(capsys, "evaluators", "list")
    assert rc == 0
    names = [l.split("\t")[0] for l in out.splitlines()]
    assert {"roofline", "link", "storage"} <= set(names)


def test_console_script_entry(files):
    proc = subprocess.run([sys.executable, "-m", "stdse.cli", "build", str(files / "hw.yaml")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "depth=1" in proc.stdout


GOLDEN = Path(__file__).parent / "golden"


def test_map_tile_then_assign_matches_golden(tmp_path, capsys):
    rc, out, err = run(capsys, "map", GOLDEN / "chip.yaml", GOLDEN / "layer.yaml", GOLDEN / "tile.map",
                       "-o", tmp_path / "m.yaml")
    assert rc == 0, err
    assert (tmp_path / "m.yaml").read_text() == (GOLDEN / "tiled.yaml").read_text()
    rc, out, err = run(capsys, "simulate", GOLDEN / "chip.yaml", GOLDEN / "layer.yaml", tmp_path / "m.yaml")
    rep = json.loads(out)
    assert rc == 0 and rep["makespan"] == 65
    assert rep["tasks"]["out[0]#0@0"] == {"start": 50, "end": 55}


def test_map_empty_script_auto_route(files, capsys):
    (files / "nodes.yaml").write_text("nodes: {E: '((0,0))', B: '((0,1))', D: '((0,2))', G: '((0,2))'}\n")
    rc, out, err = run(capsys, "map", files / "hw.yaml", files / "wl.yaml", "--base", files / "nodes.yaml",
                       "--auto-route")
    assert rc == 0, err
    doc = yaml.safe_load(out)
    assert set(doc["edges"]) == {"A", "C", "F"}
    assert doc["edges"]["F"]["path"] == ["((0,0))", "((0,2))"]
    assert doc["lineage"] == [{"op": "auto_route"}]


def test_map_base_keeps_lineage(files, capsys):
    rc, out, err = run(capsys, "map", GOLDEN / "chip.yaml", GOLDEN / "layer.yaml", "--base", GOLDEN / "tiled.yaml",
                       "-o", files / "again.yaml")
    assert rc == 0, err
    rc, out, err = run(capsys, "simulate", GOLDEN / "chip.yaml", GOLDEN / "layer.yaml", files / "again.yaml")
    assert rc == 0 and json.loads(out)["makespan"] == 65


def test_evaluator_error_names_task_and_point(tmp_path, capsys):
    hw = yaml.safe_load((GOLDEN / "chip.yaml").read_text())
    del hw["elements"][0]["params"]["local_bandwidth"]
    (tmp_path / "chip.yaml").write_text(dump_yaml(hw))
    rc, out, err = run(capsys, "simulate", tmp_path / "chip.yaml", GOLDEN / "layer.yaml", GOLDEN / "tiled.yaml")
    assert rc == 1 and "task 'mm[0]' on ((0,0))" in err


def test_barrier_cycle_exits_2(files, capsys):
    doc = yaml.safe_load((files / "map.yaml").read_text())
    # B waits for a barrier that waits for D, which depends on B
    doc["sync"] = {"s": [{"coord": "((0,2))", "before": ["D"]}, {"coord": "((0,1))", "before": [], "after": ["B"]}]}
    (files / "cyc.yaml").write_text(dump_yaml(doc))
    rc, out, err = run(capsys, "simulate", files / "hw.yaml", files / "wl.yaml", files / "cyc.yaml")
    assert rc == 2 and "deadlock" in err and "B" in err
