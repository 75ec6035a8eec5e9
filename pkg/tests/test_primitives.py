import pytest
from hypothesis import given, settings, strategies as st

from stdse.fixtures import grid_2x2, shared_link_example
from stdse.hardware import build
from stdse.mapping import validate_mapping
from stdse.primitives import (PrimitiveError, assign_block, auto_route, initial_state, insert_sync_barrier, place,
                              replay, restore, run_script, set_phase, add_group, lower_phases, snapshot, split_even,
                              tile_task)
from stdse.simulator import simulate
from stdse.taskgraph import Task, TaskGraph, validate_graph


def chain(ops=1000):
    g = TaskGraph()
    g.add_task(Task("W", "storage", size=300))
    g.add_task(Task("X", "compute", ops=ops, bytes=100))
    g.add_task(Task("C", "communication", volume=10))
    g.add_task(Task("Y", "compute", ops=5))
    g.add_dependency("W", "X", 90)
    g.add_dependency("X", "C", 10)
    g.add_dependency("C", "Y", 10)
    return g


MEM_GRID = {
    "name": "chip", "dims": [2, 3],
    "elements": [{"point": "compute", "params": {"throughput": 1}}] * 4
                + [{"point": "memory", "params": {"capacity": 10_000}}] * 2,
    "comm": {"pattern": "mesh2d", "link_bandwidth": 1},
}


def state(g=None):
    return initial_state(g or chain(), build(MEM_GRID))


def errors(s):
    return [d for d in validate_graph(s.graph) + validate_mapping(s.mapping, s.graph, s.model)
            if d.severity == "error"]


def test_tile_identity():
    s = state()
    t = tile_task(s, "X", [1])
    assert t.graph == s.graph and t.mapping == s.mapping
    assert len(t.lineage) == 1


def test_tile_even_and_ceiling_first():
    s = tile_task(state(chain(1024)), "X", [4])
    assert [s.graph.tasks[f"X[{i}]"].ops for i in range(4)] == [256] * 4
    s = tile_task(state(), "X", [3])
    assert [s.graph.tasks[f"X[{i}]"].ops for i in range(3)] == [334, 333, 333]
    assert split_even(10, 4) == [3, 3, 2, 2]


def test_tile_fans_out_dependencies():
    s = tile_task(state(), "X", [2, 2])
    tiles = [f"X[{i},{j}]" for i in range(2) for j in range(2)]
    assert all(("W", t) in s.graph.deps for t in tiles)
    # each tile gets its own copy of the outgoing transfer
    assert all((t, f"C[{t[2:-1]}]") in s.graph.deps for t in tiles)
    assert sum(s.graph.deps[("W", t)].carried_bytes for t in tiles) == 90
    assert sum(s.graph.tasks[f"C[{t[2:-1]}]"].volume for t in tiles) == 10
    assert validate_graph(s.graph) == []


def test_tile_drops_stale_mapping():
    s = assign_block(state(), "W,X,Y", (), "row-major")
    s = auto_route(s)
    t = tile_task(s, "X", [2])
    assert "X" not in t.mapping.node_map and "C" not in t.mapping.edge_maps
    assert t.mapping.node_map["Y"] == s.mapping.node_map["Y"]


def test_tile_errors():
    with pytest.raises(PrimitiveError, match="cannot tile communication"):
        tile_task(state(), "C", [2])
    with pytest.raises(PrimitiveError, match="positive"):
        tile_task(state(), "X", [0])
    with pytest.raises(PrimitiveError, match="unknown task"):
        tile_task(state(), "Q", [2])


def test_assign_block_policies():
    g = TaskGraph()
    for k in range(5):
        g.add_task(Task(f"t{k}", "compute", ops=1))
    s = initial_state(g, build(grid_2x2()))
    four = assign_block(s, ["t0", "t1", "t2", "t3"], (), "row-major")
    assert sorted(four.mapping.node_map.values()) == [((0, 0),), ((0, 1),), ((1, 0),), ((1, 1),)]
    five = assign_block(s, "t*", (), "round-robin")
    on00 = [t for t, c in five.mapping.node_map.items() if c == ((0, 0),)]
    assert on00 == ["t0", "t4"]
    with pytest.raises(PrimitiveError, match="row-major needs 5"):
        assign_block(s, "t*", (), "row-major")
    empty = assign_block(s, [], (), "row-major")
    assert empty.mapping == s.mapping


def test_assign_block_kinds_and_region():
    s = assign_block(state(), "W,X,Y", (), "row-major")
    assert s.mapping.node_map["W"] == ((1, 1),)
    with pytest.raises(PrimitiveError, match="not a SpaceMatrix"):
        assign_block(state(), "X", ((0, 0),))
    with pytest.raises(PrimitiveError, match="cannot be placed"):
        assign_block(state(), "C", ())


def test_barrier_after_tasks_on_three_points():
    g = TaskGraph()
    for k in range(3):
        g.add_task(Task(f"a{k}", "compute", ops=10 * (k + 1)))
        g.add_task(Task(f"b{k}", "compute", ops=1))
    s = initial_state(g, build(grid_2x2()))
    for k, c in enumerate([(0, 0), (0, 1), (1, 0)]):
        s = place(s, f"a{k}", (c,))
        s = place(s, f"b{k}", (c,))
    free = simulate(s.model, s.graph, s.mapping).task_times()
    assert free["b0"][0] == 10
    fenced = insert_sync_barrier(s, ["a0", "a1", "a2"])
    assert len({r.coord for r in fenced.mapping.sync_tasks}) == 3
    t = simulate(fenced.model, fenced.graph, fenced.mapping).task_times()
    assert min(t[f"b{k}"][0] for k in range(3)) == max(t[f"a{k}"][1] for k in range(3)) == 30


def test_barrier_single_and_errors():
    s = assign_block(state(), "W,X,Y", ())
    one = insert_sync_barrier(s, ["X"])
    assert len(one.mapping.sync_tasks) == 1
    assert one.mapping.sync_tasks[0].sync_id == "barrier0"
    two = insert_sync_barrier(one, ["Y"])
    assert two.mapping.sync_tasks[-1].sync_id == "barrier1"
    with pytest.raises(PrimitiveError, match="empty"):
        insert_sync_barrier(s, [])
    assert insert_sync_barrier(s, [], allow_empty=True).mapping == s.mapping
    with pytest.raises(PrimitiveError, match="not placed"):
        insert_sync_barrier(state(), ["X"])


def test_snapshot_restore():
    s = state()
    tok = snapshot(s)
    s2 = tile_task(s, "X", [2])
    assert restore(tok) == s
    tok2 = snapshot(s2)
    b1 = assign_block(restore(tok), "X,Y", ())
    b2 = assign_block(restore(tok2), "X[*],Y", ())
    assert restore(tok) == s and restore(tok2) == s2
    assert b1.graph != b2.graph
    with pytest.raises(PrimitiveError, match="unknown snapshot"):
        restore("stale-0")


def test_phase_primitives():
    g = TaskGraph()
    for k in range(2):
        g.add_task(Task(f"p{k}", "compute", ops=5 * (k + 1)))
        g.add_task(Task(f"q{k}", "compute", ops=1))
    s = initial_state(g, build(grid_2x2()))
    s = assign_block(s, "p0,p1", (), "row-major")
    s = assign_block(s, "q0,q1", (), "row-major")
    s = set_phase(s, "p*", (0, 1))
    s = set_phase(s, "q*", (1, 0))
    s = add_group(s, "pair", ["((0,0))", "((0,1))"])
    s = lower_phases(s)
    t = simulate(s.model, s.graph, s.mapping).task_times()
    assert t["q0"][0] == t["q1"][0] == 10
    assert replay(s.lineage, g, s.model) == s


SCRIPT = """\
# tile, then spread over the compute points
tile_task X 2
assign X[*] root row-major
assign W,Y root round-robin
snapshot spread
auto_route
barrier X[*]
"""


def test_script_matches_api():
    via_script = run_script(SCRIPT, state())
    s = tile_task(state(), "X", [2])
    s = assign_block(s, "X[*]", (), "row-major")
    s = assign_block(s, "W,Y", (), "round-robin")
    s = insert_sync_barrier(auto_route(s), "X[*]")
    assert via_script == s
    assert errors(via_script) == []


def test_script_restore_and_errors():
    s = run_script("place X ((0,0))\nsnapshot a\nplace X ((0,1))\nrestore a\n", state())
    assert s.mapping.node_map["X"] == ((0, 0),)
    with pytest.raises(PrimitiveError, match=r"m\.txt:2: place: unknown task 'Q'"):
        run_script("place X ((0,0))\nplace Q ((0,0))\n", state(), "m.txt")
    with pytest.raises(PrimitiveError, match=r"<script>:1: unknown primitive 'fuse'"):
        run_script("fuse X Y", state())
    with pytest.raises(PrimitiveError, match=r":1: usage"):
        run_script("tile_task X", state())


def test_route_primitive():
    model, g, m = shared_link_example()
    s = initial_state(g, model)
    for t, c in m.node_map.items():
        s = place(s, t, c)
    s = run_script("route F ((0,0)) ((0,1)) ((0,2)) via=(0,0),(0,1);(0,1),(0,2)\nauto_route\n", s)
    assert s.mapping.edge_maps["F"] == m.edge_maps["F"]


OPS = st.sampled_from(["tile", "assign", "place", "barrier", "route", "snap"])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(OPS, st.integers(0, 50), st.integers(1, 3)), max_size=8))
def test_random_sequences_replay_and_conserve(steps):
    s = state()
    total_ops = sum(t.ops for t in s.graph.tasks.values())
    total_bytes = sum(t.bytes for t in s.graph.tasks.values())
    for op, k, n in steps:
        ids = sorted(s.graph.tasks)
        placeable = [t for t in ids if s.graph.tasks[t].kind in ("compute", "storage")]
        try:
            if op == "tile":
                s = tile_task(s, placeable[k % len(placeable)], [n])
            elif op == "assign":
                s = assign_block(s, placeable, (), "round-robin")
            elif op == "place":
                t = placeable[k % len(placeable)]
                kind = "compute" if s.graph.tasks[t].kind == "compute" else "memory"
                pts = [c for c, p in s.model._points if p.kind == kind]
                s = place(s, t, pts[k % len(pts)])
            elif op == "barrier":
                s = insert_sync_barrier(s, [t for t in placeable if t in s.mapping.node_map][:n])
            elif op == "route":
                s = auto_route(s)
            else:
                s = restore(snapshot(s))
        except PrimitiveError:
            continue
        assert errors(s) == [] or any(d.code in ("unplaced", "sync") for d in errors(s))
    assert sum(t.ops for t in s.graph.tasks.values()) == total_ops
    assert sum(t.bytes for t in s.graph.tasks.values()) == total_bytes
    again = replay(s.lineage, chain(), s.model)
    assert again == s


def test_auto_route_skips_unplaced_endpoints():
    g = TaskGraph()
    for t in ("a", "b", "c"):
        g.add_task(Task(t, "compute", ops=1))
    for e, (x, y) in {"e1": ("a", "b"), "e2": ("b", "c")}.items():
        g.add_task(Task(e, "communication", volume=1))
        g.add_dependency(x, e)
        g.add_dependency(e, y)
    s = place(place(state(g), "a", "((0,0))"), "b", "((1,0))")
    s = auto_route(s)
    assert set(s.mapping.edge_maps) == {"e1"}
    s = auto_route(place(s, "c", "((0,2))"))
    assert set(s.mapping.edge_maps) == {"e1", "e2"}
