"""Small ready-made (hardware, workload, mapping) triples.

These double as documentation and as regression fixtures.
"""

from __future__ import annotations

import random
from typing import Tuple

from .hardware import HardwareModel, build
from .mapping import Mapping, auto_route_all, define_group, map_edge, map_node, set_time, lower_time_coords
from .taskgraph import Task, TaskGraph


def line_chip(n: int = 3, bandwidth=1, hop_latency=0, sharing: str = "exclusive") -> dict:
    """A 1 x n row of unit-throughput cores joined by a mesh."""
    return {
        "name": "chip",
        "dims": [1, n],
        "element": {"point": "compute", "params": {"throughput": 1}, "sharing": sharing},
        "comm": {"pattern": "mesh2d", "link_bandwidth": bandwidth, "hop_latency": hop_latency},
    }


def shared_link_example(v_a: int = 50, t_e: int = 100, t_b: int = 100, v_c: int = 50
                        ) -> Tuple[HardwareModel, TaskGraph, Mapping]:
    """Seven tasks where two transfers share a first hop.

    ``E`` feeds transfers ``A`` and ``F``; ``A -> B -> C -> D`` and ``F -> G``.
    ``A`` and ``F`` leave core (0,0) over the same link; ``F`` carries three
    times ``A``'s volume and is forwarded through core (0,1), where its second
    hop shares a link with transfer ``C``.  Link bandwidth is 1, so ``V/b`` is
    just the volume.
    """
    model = build(line_chip(3))
    g = TaskGraph()
    g.add_task(Task("E", "compute", ops=t_e))
    g.add_task(Task("A", "communication", volume=v_a))
    g.add_task(Task("B", "compute", ops=t_b))
    g.add_task(Task("C", "communication", volume=v_c))
    g.add_task(Task("D", "compute", ops=1))
    g.add_task(Task("F", "communication", volume=3 * v_a))
    g.add_task(Task("G", "compute", ops=1))
    for s, d in [("E", "A"), ("A", "B"), ("B", "C"), ("C", "D"), ("E", "F"), ("F", "G")]:
        g.add_dependency(s, d)
    m = Mapping()
    for t, c in [("E", (0, 0)), ("B", (0, 1)), ("D", (0, 2)), ("G", (0, 2))]:
        m = map_node(m, g, model, t, (c,))
    m = map_edge(m, g, model, "A", [((0, 0),), ((0, 1),)], [[(0, 0), (0, 1)]])
    m = map_edge(m, g, model, "C", [((0, 1),), ((0, 2),)], [[(0, 1), (0, 2)]])
    # store-and-forward through the middle core: two sub-tasks
    m = map_edge(m, g, model, "F", [((0, 0),), ((0, 1),), ((0, 2),)], [[(0, 0), (0, 1)], [(0, 1), (0, 2)]])
    return model, g, m


def grid_2x2() -> dict:
    return {
        "name": "chip",
        "dims": [2, 2],
        "element": {"point": "compute", "params": {"throughput": 1}},
        "comm": {"pattern": "mesh2d", "link_bandwidth": 1},
    }


def phase_example(second_time=(1, 0)) -> Tuple[HardwareModel, TaskGraph, Mapping]:
    """Four independent tasks per phase on a 2x2 grid, with time coordinates.

    Phase-one tasks have time ``(0, 1)``; phase-two tasks get
    ``second_time``.  A change of the outer time index is a group-wide
    transition and must be fenced by a barrier; a change of only the inner
    index is not.
    """
    model = build(grid_2x2())
    g = TaskGraph()
    cores = [(0, 0), (0, 1), (1, 0), (1, 1)]
    m = Mapping()
    for k, c in enumerate(cores):
        a, b = f"p{k}", f"q{k}"
        g.add_task(Task(a, "compute", ops=10 * (k + 1)))
        g.add_task(Task(b, "compute", ops=5))
        m = map_node(m, g, model, a, (c,))
        m = map_node(m, g, model, b, (c,))
        m = set_time(m, a, (0, 1))
        m = set_time(m, b, tuple(second_time))
    m = define_group(m, model, "all", [(c,) for c in cores])
    m = lower_time_coords(m, g, model)
    return model, g, m


# --------------------------------------------------------------------------
# random corpora for property tests


def random_case(seed: int, max_tasks: int = 12, max_points: int = 4, max_links: int = 3):
    """Random DAG on a row of at most ``max_points`` cores.

    Cores sit on a ``1 x P`` mesh with ``P - 1 <= max_links`` physical links
    (each usable in both directions) or on a single shared bus.  Transfers
    between cores use explicit paths, sometimes forwarded through a middle
    core, so several of them may share links.  Some cores are ``shared``, so
    compute contends too, and zero-cost tasks create simultaneous events.
    """
    rng = random.Random(seed)
    npts = rng.randint(2, min(max_points, max_links + 1))
    desc = {
        "name": "chip",
        "dims": [1, npts],
        "elements": [
            {"point": "compute", "params": {"throughput": rng.choice([1, 2])},
             "sharing": rng.choice(["exclusive", "exclusive", "shared"])}
            for _ in range(npts)
        ],
        "comm": {"pattern": rng.choice(["mesh2d", "mesh2d", "bus"]), "link_bandwidth": rng.choice([1, 2, 3]),
                 "hop_latency": rng.choice([0, 0, 1])},
    }
    model = build(desc)
    g = TaskGraph()
    m = Mapping()
    nodes = []
    budget = rng.randint(2, max_tasks)
    used = 0
    while used < budget:
        tid = f"t{used}"
        g.add_task(Task(tid, "compute", ops=rng.choice([0, rng.randint(1, 12)])))
        m = map_node(m, g, model, tid, ((0, rng.randrange(npts)),))
        used += 1
        cands = list(nodes)
        rng.shuffle(cands)
        for p in cands[: rng.randint(0, 2)]:
            if used < budget and rng.random() < 0.6:
                e = f"e{used}"
                g.add_task(Task(e, "communication", volume=rng.randint(1, 12)))
                g.add_dependency(p, e)
                g.add_dependency(e, tid)
                used += 1
            else:
                g.add_dependency(p, tid)
        nodes.append(tid)
    for t in g.tasks.values():
        if t.kind != "communication":
            continue
        (src,) = [s for (s, d) in g.deps if d == t.id]
        (dst,) = [d for (s, d) in g.deps if s == t.id]
        a, b = m.node_map[src][0][1], m.node_map[dst][0][1]
        if a == b:
            continue
        step = 1 if b > a else -1
        idx = [(0, j) for j in range(a, b + step, step)]
        if rng.random() < 0.4 and abs(b - a) >= 2:
            mid = rng.randrange(1, abs(b - a))
            path = [((0, a),), (idx[mid],), ((0, b),)]
            subs = [idx[: mid + 1], idx[mid:]]
        else:
            path = [((0, a),), ((0, b),)]
            subs = [idx]
        m = map_edge(m, g, model, t.id, path, subs)
    m = auto_route_all(m, g, model)
    return model, g, m


# --------------------------------------------------------------------------
# desk-scale design space


def two_level_mesh(core_throughput=256, local_bandwidth=64, noc_bandwidth=64, nop_bandwidth=32,
                   memory_capacity=1 << 26) -> dict:
    """2 x 2 chiplets of 2 x 2 points each (a 4 x 4 array of SpacePoints).

    Each chiplet has three cores and one memory point on its own mesh NoC;
    chiplets talk over a package-level mesh.  Core and memory parameters sit
    in ``templates`` so a sweep can vary them with one parameter path.
    """
    return {
        "name": "package",
        "dims": [2, 2],
        "templates": {
            "core": {"point": "compute", "params": {"throughput": core_throughput, "local_bandwidth": local_bandwidth}},
            "mem": {"point": "memory", "params": {"capacity": memory_capacity}},
        },
        "comm": {"pattern": "mesh2d", "link_bandwidth": nop_bandwidth, "hop_latency": 4},
        "element": {
            "name": "chiplet",
            "dims": [2, 2],
            "elements": [{"use": "core"}, {"use": "core"}, {"use": "core"}, {"use": "mem"}],
            "comm": {"pattern": "mesh2d", "link_bandwidth": noc_bandwidth, "hop_latency": 1},
        },
    }


SPREAD_SCRIPT = """\
# weights and inputs over the memory points, compute over the cores
assign x0,*.W* root round-robin
assign *.qkv,*.score,*.softmax,*.av,*.proj,*.up,*.act,*.down root round-robin
auto_route
"""


def board_example() -> dict:
    """Four spatial levels: board -> package -> chiplet -> core.

    The board is a 2 x 2 mesh of identical packages.  Each package is a ring
    of three chiplets: two compute chiplets with different core counts and
    one IO chiplet holding four memory points on a bus.  A core is a compute
    point and a local memory point on a bus, so core points sit four index
    tuples deep while the IO memories sit three deep.
    """
    core = {
        "name": "core",
        "dims": [2],
        "elements": [{"point": "compute", "params": {"throughput": 256, "local_bandwidth": 64}},
                     {"point": "memory", "params": {"capacity": 1 << 16}}],
        "comm": {"pattern": "bus", "link_bandwidth": 128},
    }
    return {
        "name": "board",
        "dims": [2, 2],
        "comm": {"pattern": "mesh2d", "link_bandwidth": 16, "hop_latency": 20},
        "templates": {
            "core": core,
            "package": {
                "name": "package",
                "dims": [3],
                "comm": {"pattern": "ring", "link_bandwidth": 32, "hop_latency": 5},
                "elements": [
                    {"name": "big", "dims": [2, 2], "element": {"use": "core"},
                     "comm": {"pattern": "mesh2d", "link_bandwidth": 64, "hop_latency": 1}},
                    {"name": "small", "dims": [1, 2], "element": {"use": "core"},
                     "comm": {"pattern": "mesh2d", "link_bandwidth": 64, "hop_latency": 1}},
                    {"name": "io", "dims": [4], "element": {"point": "memory", "params": {"capacity": 1 << 20}},
                     "comm": {"pattern": "bus", "link_bandwidth": 128, "hop_latency": 2}},
                ],
            },
        },
        "element": {"use": "package"},
    }


# 4 x 5 x 3 x 4 = 240 design points over two_level_mesh()
DESK_AXES = [
    ("comm.link_bandwidth", [8, 16, 32, 64]),
    ("element.comm.link_bandwidth", [16, 32, 64, 128, 256]),
    ("templates.core.params.throughput", [128, 256, 512]),
    ("templates.core.params.local_bandwidth", [16, 32, 64, 128]),
]


def desk_workload():
    """Ten transformer layers, 200 tasks."""
    from .taskgraph import transformer_graph
    return transformer_graph(64, 32, layers=10)
