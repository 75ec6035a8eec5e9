import pytest
from hypothesis import given, settings, strategies as st

from stdse.fixtures import shared_link_example
from stdse.taskgraph import (GraphError, Task, TaskGraph, graph_from_dict, graph_to_dict, topological_layers,
                             transformer_graph, validate_graph)
from stdse.textio import FormatError, load_yaml


def graph(edges, nodes=()):
    g = TaskGraph()
    for n in sorted(set(nodes) | {x for e in edges for x in e}):
        g.add_task(Task(n, "compute", ops=1))
    for a, b in edges:
        g.add_dependency(a, b)
    return g


def test_chain_is_valid():
    assert validate_graph(graph([("A", "B"), ("B", "C")])) == []


def test_self_loop_is_a_cycle():
    diags = validate_graph(graph([("A", "A")]))
    assert [d.code for d in diags] == ["cycle"]
    with pytest.raises(GraphError, match="cycle"):
        topological_layers(graph([("A", "A")]))


def test_diamond():
    g = graph([("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")])
    assert validate_graph(g) == []
    assert g.inputs == ["A"]
    assert topological_layers(g) == [["A"], ["B", "C"], ["D"]]


def test_empty_graph():
    assert topological_layers(TaskGraph()) == []


def test_shared_link_layers():
    _, g, _ = shared_link_example()
    assert topological_layers(g) == [["E"], ["A", "F"], ["B", "G"], ["C"], ["D"]]


def test_construction_errors():
    g = graph([("A", "B")])
    with pytest.raises(GraphError, match="duplicate task"):
        g.add_task(Task("A", "compute"))
    with pytest.raises(GraphError, match="dangling"):
        g.add_dependency("A", "Z")
    with pytest.raises(GraphError, match="duplicate dependency"):
        g.add_dependency("A", "B")


def test_work_invariants():
    g = TaskGraph()
    g.add_task(Task("a", "compute", ops=-1))
    g.add_task(Task("s", "sync", ops=3, sync_id="b"))
    g.add_task(Task("c", "communication", volume=0))
    codes = sorted(d.code for d in validate_graph(g))
    assert codes == ["comm-endpoints", "work", "work", "work"]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.data())
def test_layers_iff_valid_and_round_trip(n, data):
    edges = data.draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    g = TaskGraph()
    for i in range(n):
        g.add_task(Task(f"t{i}", "compute", ops=i, bytes=2 * i))
    for a, b in sorted(edges):
        g.add_dependency(f"t{a}", f"t{b}", a + b)
    valid = validate_graph(g) == []
    try:
        layers = topological_layers(g)
        ok = True
    except GraphError:
        ok = False
    assert ok == valid
    if ok:
        pos = {t: k for k, layer in enumerate(layers) for t in layer}
        assert all(pos[a] < pos[b] for a, b in g.deps)
    assert graph_from_dict(graph_to_dict(g)) == g


def test_workload_file_errors_cite_lines():
    text = "tasks:\n  - {id: a, kind: compute}\n  - {id: b, kind: compute, flops: 3}\n"
    with pytest.raises(FormatError, match=r"wl.yaml:3"):
        graph_from_dict(load_yaml(text, source="wl.yaml"))


def test_transformer_generator_is_valid():
    g = transformer_graph(64, 32, layers=10)
    assert validate_graph(g) == []
    assert 180 <= len(g) <= 220
    kinds = {t.kind for t in g.tasks.values()}
    assert kinds == {"compute", "storage", "communication"}
