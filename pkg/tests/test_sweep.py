import pytest

from stdse.fixtures import SPREAD_SCRIPT, desk_workload, line_chip, two_level_mesh
from stdse.sweep import SweepError, SweepSpec, get_path, load_sweep, rows_to_csv, run_sweep, set_path
from stdse.taskgraph import dump_workload, transformer_graph
from stdse.textio import FormatError, dump_yaml


def small_spec(axes):
    return SweepSpec(base=two_level_mesh(), workload=transformer_graph(16, 4, layers=1), axes=axes,
                     script=SPREAD_SCRIPT)


def test_paths():
    d = two_level_mesh()
    assert get_path(d, "element.elements[3].use") == "mem"
    e = set_path(d, "templates.core.params.throughput", 7)
    assert e["templates"]["core"]["params"]["throughput"] == 7
    assert d["templates"]["core"]["params"]["throughput"] == 256
    with pytest.raises(SweepError, match="does not resolve"):
        set_path(d, "comm.nope.x", 1)
    with pytest.raises(SweepError, match="bad parameter path"):
        get_path(d, "comm..x")


def test_one_axis_three_rows():
    spec = small_spec([("comm.link_bandwidth", [8, 16, 32])])
    rows = run_sweep(spec)
    assert [r["comm.link_bandwidth"] for r in rows] == [8, 16, 32]
    assert all(r["status"] == "ok" for r in rows)
    # a faster package link never slows the same mapping down
    spans = [r["makespan"] for r in rows]
    assert spans == sorted(spans, reverse=True)


def test_two_by_two_lexicographic():
    spec = small_spec([("comm.link_bandwidth", [8, 16]), ("templates.core.params.throughput", [1, 2])])
    rows = run_sweep(spec)
    got = [(r["comm.link_bandwidth"], r["templates.core.params.throughput"]) for r in rows]
    assert got == [(8, 1), (8, 2), (16, 1), (16, 2)]
    text = rows_to_csv(spec, rows)
    lines = text.splitlines()
    assert lines[0] == ("comm.link_bandwidth,templates.core.params.throughput,status,makespan,"
                        "compute_util_mean,compute_util_max,comm_util_max,error")
    assert len(lines) == 5


def test_failed_point_does_not_stop_sweep():
    spec = small_spec([("templates.core.params.throughput", [256, -1, 128])])
    rows = run_sweep(spec)
    assert [r["status"] for r in rows] == ["ok", "failed", "ok"]
    assert "throughput" in rows[1]["error"]
    assert rows[1].get("makespan") is None


def test_parallel_rows_keep_order():
    spec = small_spec([("comm.link_bandwidth", [8, 16, 32]), ("element.comm.link_bandwidth", [16, 64])])
    assert rows_to_csv(spec, run_sweep(spec, jobs=3)) == rows_to_csv(spec, run_sweep(spec))


def test_load_sweep_file(tmp_path):
    (tmp_path / "hw.yaml").write_text(dump_yaml(line_chip(3)))
    (tmp_path / "wl.yaml").write_text(dump_workload(transformer_graph(8, 2, layers=1)))
    (tmp_path / "s.map").write_text("assign * ((0,0)) round-robin\n")
    (tmp_path / "sw.yaml").write_text(dump_yaml({
        "base": "hw.yaml", "workload": "wl.yaml", "script": "s.map",
        "axes": [{"path": "comm.link_bandwidth", "values": [1, 2, 4]}]}))
    spec = load_sweep(tmp_path / "sw.yaml")
    assert spec.points() == [(1,), (2,), (4,)]
    (tmp_path / "bad.yaml").write_text(dump_yaml({
        "base": "hw.yaml", "workload": "wl.yaml", "axes": [{"path": "comm.wat", "values": [1]}]}))
    with pytest.raises(FormatError, match=r"bad.yaml: axes\[0\]"):
        load_sweep(tmp_path / "bad.yaml")


def test_desk_workload_size():
    assert len(desk_workload().tasks) == 200
