"""Multi-level hardware description, spatiotemporal mapping and task-level simulation."""

from .coords import CommDomain, coord, format_coord, parse_coord
from .evaluators import all_reduce_latency, get_evaluator, link_transfer, list_evaluators, register_evaluator, roofline_compute
from .hardware import HardwareModel, SpaceMatrix, SpacePoint, build, enumerate_points, load_hardware, retrieve, validate
from .mapping import Mapping, auto_route_all, lower_time_coords, map_edge, map_node, sync, validate_mapping
from .simulator import SimulationResult, simulate
from .taskgraph import Task, TaskGraph, load_workload, validate_graph

__version__ = "0.1.0"
