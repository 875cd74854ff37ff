"""Workloads, trace audits, parameter sweeps and CSV reports."""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .database import Database, network_from_database
from .engine import query
from .graph import RoadNetwork, dijkstra
from .pir import AccessTrace, CapacityExceeded

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "schema_version", "label", "scheme", "param", "value", "status", "pairs", "seed",
    "pir_time", "comm_time", "client_time", "total_time",
    "rounds", "pir_accesses",
    "fh_pages_accessed", "fl_pages_accessed", "fi_pages_accessed", "fd_pages_accessed", "fifd_pages_accessed",
    "fd_real_pages_mean",
    "fh_bytes", "fl_bytes", "fi_bytes", "fd_bytes", "fifd_bytes", "total_bytes",
    "fd_utilization", "note",
]


class WorkloadError(AssertionError):
    pass


@dataclass(frozen=True)
class TraceCheck:
    passed: bool
    index: int = -1  # first trace differing from trace 0
    round: int = -1  # 1-based round where it diverges
    diff: str = ""

    def __bool__(self):
        return self.passed


def verify_uniform_traces(traces: Sequence[AccessTrace]) -> TraceCheck:
    """Pass iff every trace has the same rounds, file sequence and page counts."""
    if not traces:
        return TraceCheck(True)
    ref = traces[0].view()
    for i, tr in enumerate(traces[1:], 1):
        view = tr.view()
        if view == ref:
            continue
        for k in range(max(len(ref), len(view))):
            a = ref[k] if k < len(ref) else None
            b = view[k] if k < len(view) else None
            if a != b:
                return TraceCheck(False, i, k + 1, f"trace {i} round {k + 1}: {b} != {a}")
    return TraceCheck(True)


@dataclass(frozen=True)
class WorkloadSpec:
    pair_count: int = 1000
    seed: int = 0
    sampling: str = "uniform"  # uniform | exhaustive

    def pairs(self, net: RoadNetwork) -> list[tuple[int, int]]:
        nodes = net.node_ids()
        if self.sampling == "exhaustive":
            return [(s, t) for s in nodes for t in nodes]
        if self.sampling != "uniform":
            raise ValueError(f"unknown sampling {self.sampling!r}")
        rng = random.Random(self.seed)
        return [(rng.choice(nodes), rng.choice(nodes)) for _ in range(self.pair_count)]


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    check: TraceCheck = TraceCheck(True)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k, "")) for k in CSV_COLUMNS})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def _storage_cols(db: Database) -> dict:
    b = db.file_bytes()
    return {
        "fh_bytes": b.get("Fh", 0), "fl_bytes": b.get("Fl", 0), "fi_bytes": b.get("Fi", 0),
        "fd_bytes": b.get("Fd", 0), "fifd_bytes": b.get("FiFd", 0), "total_bytes": sum(b.values()),
        "fd_utilization": float(db.manifest.get("fd_utilization", 0.0)),
    }


def run_workload(db: Database, spec: WorkloadSpec, net: Optional[RoadNetwork] = None,
                 measure_client: bool = False, label: str = "", rel_tol: float = 1e-9,
                 oracle: Optional[dict] = None) -> BenchReport:
    """Run every pair, check each cost against Dijkstra and all traces for uniformity.

    ``net`` defaults to the network decoded from the database itself.
    ``oracle`` may carry precomputed ``(s, t) -> cost`` values.
    """
    if net is None:
        net = network_from_database(db)
    pairs = spec.pairs(net)
    report = BenchReport()
    if not pairs:
        return report
    sums = {"pir": 0.0, "comm": 0.0, "client": 0.0, "fd_real": 0}
    for idx, (s, t) in enumerate(pairs):
        rng = random.Random(spec.seed * 1_000_003 + idx)
        res = query(db, net.coords[s], net.coords[t], rng=rng, measure=measure_client)
        if oracle is not None and (s, t) in oracle:
            ref = oracle[(s, t)]
        else:
            p = dijkstra(net, s, t)
            ref = math.inf if p is None else p.cost
        if res.source != s or res.target != t:
            raise WorkloadError(f"pair ({s}, {t}) resolved to nodes ({res.source}, {res.target})")
        if not _same(res.cost, ref, rel_tol):
            raise WorkloadError(f"{db.scheme} pair ({s}, {t}): cost {res.cost} != oracle {ref}")
        report.traces.append(res.trace)
        sums["pir"] += res.timing.pir_time
        sums["comm"] += res.timing.comm_time
        sums["client"] += res.timing.client_time
        sums["fd_real"] += res.real_fetches.get("Fd", 0) + res.real_fetches.get("FiFd", 0)
    check = verify_uniform_traces(report.traces)
    report.check = check
    if not check:
        raise WorkloadError(f"traces differ: {check.diff}")
    n = len(pairs)
    per_file = report.traces[0].pages_per_file()
    row = {
        "schema_version": SCHEMA_VERSION, "label": label, "scheme": db.scheme, "status": "ok",
        "pairs": n, "seed": spec.seed,
        "pir_time": sums["pir"] / n, "comm_time": sums["comm"] / n, "client_time": sums["client"] / n,
        "rounds": len(report.traces[0].rounds), "pir_accesses": report.traces[0].pir_pages,
        "fh_pages_accessed": per_file.get("Fh", 0), "fl_pages_accessed": per_file.get("Fl", 0),
        "fi_pages_accessed": per_file.get("Fi", 0), "fd_pages_accessed": per_file.get("Fd", 0),
        "fifd_pages_accessed": per_file.get("FiFd", 0),
        "fd_real_pages_mean": sums["fd_real"] / n,
    }
    row["total_time"] = row["pir_time"] + row["comm_time"] + row["client_time"]
    row.update(_storage_cols(db))
    report.rows.append(row)
    return report


def _same(a: float, b: float, rel_tol: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return math.isclose(a, b, rel_tol=rel_tol, abs_tol=1e-12)


def nil_row(scheme: str, param: str, value, spec: WorkloadSpec, reason: str, label: str = "") -> dict:
    return {"schema_version": SCHEMA_VERSION, "label": label, "scheme": scheme, "param": param,
            "value": value, "status": "Nil", "pairs": spec.pair_count, "seed": spec.seed, "note": reason}


def sweep_parameter(build_fn: Callable[[object], Database], grid: Sequence, spec: WorkloadSpec,
                    net: Optional[RoadNetwork] = None, param: str = "", scheme: str = "",
                    measure_client: bool = False, label: str = "", oracle: Optional[dict] = None) -> list[dict]:
    """One report row per grid value; builds over the capacity cap give ``Nil`` rows."""
    if not grid:
        raise ValueError("empty parameter grid")
    rows = []
    for value in grid:
        try:
            db = build_fn(value)
        except CapacityExceeded as exc:
            rows.append(nil_row(scheme, param, value, spec, str(exc), label))
            continue
        rep = run_workload(db, spec, net, measure_client, label, oracle=oracle)
        for row in rep.rows:
            row.update({"param": param, "value": value})
            rows.append(row)
    return rows
