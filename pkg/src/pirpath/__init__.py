"""Private shortest-path queries over a simulated PIR page store."""

from .bench import BenchReport, WorkloadSpec, run_workload, sweep_parameter, verify_uniform_traces
from .database import BuildOptions, Database, build_database, network_from_database, precompute
from .engine import PlanViolation, QueryPlan, QueryResult, query
from .graph import Path, RoadNetwork, dijkstra, parse_network, read_network, write_network
from .pir import AccessTrace, CapacityExceeded, CostModel, simulate_response_time

__version__ = "0.1.0"

__all__ = [
    "AccessTrace", "BenchReport", "BuildOptions", "CapacityExceeded", "CostModel", "Database", "Path",
    "PlanViolation", "QueryPlan", "QueryResult", "RoadNetwork", "WorkloadSpec", "build_database",
    "dijkstra", "network_from_database", "parse_network", "precompute", "query", "read_network",
    "run_workload", "simulate_response_time", "sweep_parameter", "verify_uniform_traces", "write_network",
]
