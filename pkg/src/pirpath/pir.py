"""Simulated oblivious page retrieval: cost model, capacity rule, access traces.

The simulator hands back exact page bytes and records only what the
server can observe: which file a retrieval hits and how many retrievals
each round makes.  Page indices are never stored.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Optional

KB = 1024
MB = 1024 * 1024
GB = 1024 * MB


def _default_a(page=4 * KB, seek=0.011, disk=125 * MB, scp_io=80 * MB, scp_crypto=10 * MB) -> float:
    return seek + page / disk + page / scp_io + page / scp_crypto


# Per-page time a + b * log2(N)^2 with a one-gigabyte file (262,144 pages
# of 4 KB, so log2(N)^2 = 324) costing one second.
_A = _default_a()
_B = (1.0 - _A) / 324.0


@dataclass(frozen=True)
class CostModel:
    page_size: int = 4 * KB
    disk_seek: float = 0.011
    disk_rate: float = 125 * MB
    scp_io_rate: float = 80 * MB
    scp_crypto_rate: float = 10 * MB
    bandwidth: float = 48 * KB
    rtt: float = 0.7
    scp_memory: int = 32 * MB
    sqrt_factor: float = 10.0
    max_file_bytes: int = int(2.5 * GB)
    pir_a: float = _A
    pir_b: float = _B

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0 and f.name != "pir_b":
                raise ValueError(f"{f.name} must be positive")
        if self.pir_b < 0:
            raise ValueError("pir_b must be non-negative")

    def device_floor(self) -> float:
        """Lower bound on a from the device rates."""
        p = self.page_size
        return self.disk_seek + p / self.disk_rate + p / self.scp_io_rate + p / self.scp_crypto_rate

    def page_time(self, page_count: int) -> float:
        """Amortised PIR time for one page of an ``page_count``-page file."""
        lg = math.log2(page_count) if page_count > 1 else 0.0
        return self.pir_a + self.pir_b * lg * lg

    def transfer_time(self, nbytes: float) -> float:
        return nbytes / self.bandwidth

    @classmethod
    def from_config(cls, path, section: str = "cost") -> "CostModel":
        """Read overrides from an INI file section (keys = field names)."""
        cp = configparser.ConfigParser()
        with open(path) as fh:
            cp.read_file(fh)
        if not cp.has_section(section):
            return cls()
        return cls().with_overrides(dict(cp.items(section)))

    def with_overrides(self, values: Mapping[str, object]) -> "CostModel":
        known = {f.name: f.type for f in fields(self)}
        kw = {}
        for k, v in values.items():
            if k not in known:
                raise ValueError(f"unknown cost model field {k!r}")
            cur = getattr(self, k)
            kw[k] = type(cur)(float(v)) if isinstance(cur, int) else float(v)
        return replace(self, **kw)


class CapacityExceeded(ValueError):
    def __init__(self, file_id: str, reason: str):
        self.file_id = file_id
        self.reason = reason
        super().__init__(f"{file_id}: {reason}")


@dataclass(frozen=True)
class Admission:
    admitted: bool
    reason: str = ""

    def __bool__(self):
        return self.admitted


def check_capacity(file, model: CostModel = CostModel()) -> Admission:
    """Whether the secure co-processor can serve ``file`` by PIR."""
    size = file.page_count * file.page_size
    if size > model.max_file_bytes:
        return Admission(False, f"file size {size} B exceeds the {model.max_file_bytes} B PIR file cap")
    working = model.sqrt_factor * math.sqrt(file.page_count) * file.page_size
    if working > model.scp_memory:
        return Admission(False, f"PIR working state {working:.0f} B (c*sqrt(N) pages) exceeds "
                                f"secure memory of {model.scp_memory} B")
    return Admission(True)


@dataclass
class AccessTrace:
    """Adversary view of one query: per round, a list of [file id, pages]."""

    rounds: list = field(default_factory=list)
    header_bytes: int = 0
    page_bytes: int = 0
    pir_time: float = 0.0
    client_time: float = 0.0

    def begin_round(self) -> None:
        self.rounds.append([])

    def add(self, file_id: str, count: int = 1) -> None:
        if not self.rounds:
            raise RuntimeError("no open round")
        rnd = self.rounds[-1]
        if rnd and rnd[-1][0] == file_id:
            rnd[-1] = (file_id, rnd[-1][1] + count)
        else:
            rnd.append((file_id, count))

    def view(self) -> tuple:
        """Hashable adversary-visible content."""
        return tuple(tuple(r) for r in self.rounds)

    @property
    def pir_pages(self) -> int:
        return sum(c for r in self.rounds for f, c in r if f != "Fh")

    def pages_per_file(self) -> dict:
        out: dict = {}
        for r in self.rounds:
            for f, c in r:
                out[f] = out.get(f, 0) + c
        return out


class PirServer:
    """Serves pages of admitted files and charges the cost model."""

    def __init__(self, files: Mapping[str, object], model: CostModel = CostModel(), header_id: str = "Fh"):
        self.files = dict(files)
        self.model = model
        self.header_id = header_id
        for fid, f in self.files.items():
            if fid == header_id:
                continue
            adm = check_capacity(f, model)
            if not adm:
                raise CapacityExceeded(fid, adm.reason)

    def download_header(self, trace: AccessTrace) -> bytes:
        """Plain (non-PIR) download of the whole header file; opens round 1."""
        f = self.files[self.header_id]
        trace.begin_round()
        trace.add(self.header_id, f.page_count)
        trace.header_bytes += f.size_bytes
        return f.data

    def read(self, file_id: str, index: int, trace: AccessTrace) -> bytes:
        """One oblivious page retrieval, appended to the current round."""
        if file_id == self.header_id:
            raise ValueError("the header is downloaded in full, not by PIR")
        f = self.files[file_id]
        data = f.page(index)
        trace.add(file_id)
        trace.page_bytes += f.page_size
        trace.pir_time += self.model.page_time(f.page_count)
        return data


def pir_read(file, index: int, trace: AccessTrace, model: CostModel = CostModel()) -> bytes:
    """Stand-alone single read against one file (capacity-checked)."""
    adm = check_capacity(file, model)
    if not adm:
        raise CapacityExceeded(file.file_id, adm.reason)
    return PirServer({file.file_id: file}, model, header_id="").read(file.file_id, index, trace)


@dataclass(frozen=True)
class ResponseTime:
    pir_time: float
    comm_time: float
    client_time: float

    @property
    def total(self) -> float:
        return self.pir_time + self.comm_time + self.client_time


def simulate_response_time(trace: AccessTrace, header_bytes: Optional[int] = None,
                           model: CostModel = CostModel()) -> ResponseTime:
    """Split a trace's simulated time into server, communication and client parts."""
    hb = trace.header_bytes if header_bytes is None else header_bytes
    comm = model.rtt * len(trace.rounds) + model.transfer_time(hb + trace.page_bytes)
    return ResponseTime(trace.pir_time, comm, trace.client_time)


def export_trace(trace: AccessTrace, model: CostModel = CostModel()) -> str:
    lines = []
    for k, rnd in enumerate(trace.rounds, 1):
        if not rnd:
            # keep empty rounds visible: the round count is part of the view
            lines.append(f"round={k} file=- pages=0")
        for fid, count in rnd:
            lines.append(f"round={k} file={fid} pages={count}")
    t = simulate_response_time(trace, model=model)
    lines.append(f"summary pir={t.pir_time:.6f} comm={t.comm_time:.6f} client={t.client_time:.6f} "
                 f"total={t.total:.6f}")
    return "\n".join(lines) + "\n"


def parse_traces(text: str) -> list[AccessTrace]:
    """Inverse of :func:`export_trace` for one or more concatenated traces."""
    out, cur = [], AccessTrace()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("summary"):
            vals = dict(kv.split("=") for kv in line.split()[1:])
            cur.pir_time = float(vals.get("pir", 0))
            cur.client_time = float(vals.get("client", 0))
            out.append(cur)
            cur = AccessTrace()
            continue
        vals = dict(kv.split("=") for kv in line.split())
        k, fid, pages = int(vals["round"]), vals["file"], int(vals["pages"])
        while len(cur.rounds) < k:
            cur.begin_round()
        if fid != "-":
            cur.add(fid, pages)
    if cur.rounds:
        out.append(cur)
    return out
