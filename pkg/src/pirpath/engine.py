"""Client-side query processing under fixed query plans.

Every query downloads the header, then issues exactly the retrievals the
plan prescribes: real ones first within each round, then dummies to fill
the round up.  A query that would need more than the plan allows is an
error, never a longer trace.
"""

from __future__ import annotations

import heapq
import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .graph import Path, shortest_path
from .pir import AccessTrace, PirServer, ResponseTime, simulate_response_time
from .precompute import PlanConstants, landmark_bound
from .storage import (
    Header,
    NodeRecord,
    decode_region_group,
    entry_span,
    key_rank,
    lookup_position,
    parse_header,
    read_index_entry,
    read_lookup,
)


class PlanViolation(RuntimeError):
    """A query needed more retrievals than its plan allows."""


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class QueryPlan:
    """Per round, the (file id, page count) segments every query performs.

    Round 1 is always the full header download.
    """

    rounds: tuple

    @classmethod
    def of(cls, rounds: Iterable[Iterable]) -> "QueryPlan":
        return cls(tuple(tuple((f, int(c)) for f, c in r) for r in rounds))

    @property
    def header_in_full(self) -> bool:
        return bool(self.rounds) and self.rounds[0][0][0] == "Fh"

    @property
    def pir_accesses(self) -> int:
        return sum(c for r in self.rounds for f, c in r if f != "Fh")

    def count(self, file_id: str) -> int:
        return sum(c for r in self.rounds for f, c in r if f == file_id)

    def as_lists(self) -> list:
        return [list(r) for r in self.rounds]


def derive_query_plan(scheme: str, consts: PlanConstants, header_pages: int = 1, cluster_pages: int = 1,
                      fixed_max: int = 0, search_rounds: int = 0) -> QueryPlan:
    """The fixed plan of a build from its constants.

    ``fixed_max`` is the round-4 size of a hybrid build; ``search_rounds``
    the number of single-region rounds of the search baselines.
    """
    k = cluster_pages
    head = [[("Fh", header_pages)]]
    if scheme == "CI":
        return QueryPlan.of(head + [[("Fl", 1)], [("Fi", consts.max_span)], [("Fd", (consts.m + 2) * k)]])
    if scheme in ("PI", "PI*"):
        return QueryPlan.of(head + [[("Fl", 1)], [("Fi", consts.h), ("Fd", 2 * k)]])
    if scheme == "HY":
        return QueryPlan.of(head + [[("Fl", 1)], [("FiFd", consts.r)], [("FiFd", fixed_max)]])
    if scheme in ("LM", "AF"):
        return QueryPlan.of(head + [[("Fd", 2 * k)]] + [[("Fd", k)]] * search_rounds)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass
class QueryResult:
    path: Optional[Path]
    trace: AccessTrace
    timing: ResponseTime
    source: int
    target: int
    snapped: tuple = (False, False)
    answered_by: str = ""
    real_fetches: dict = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return math.inf if self.path is None else self.path.cost


# ---------------------------------------------------------------------------
# Session plumbing


class _Session:
    def __init__(self, db, rng: Optional[random.Random]):
        self.db = db
        self.server: PirServer = db.server
        self.trace = AccessTrace()
        self.rng = rng if rng is not None else random.Random()
        self.hdr: Header = parse_header(self.server.download_header(self.trace))
        self.k = self.hdr.cluster_pages
        self.real = {}

    def round(self):
        self.trace.begin_round()

    def read(self, file_id: str, index: int) -> bytes:
        self.real[file_id] = self.real.get(file_id, 0) + 1
        return self.server.read(file_id, index, self.trace)

    def read_span(self, file_id: str, start: int, count: int) -> bytes:
        return b"".join(self.read(file_id, start + i) for i in range(count))

    def dummy(self, file_id: str, count: int = 1) -> None:
        n = self.server.files[file_id].page_count
        for _ in range(count):
            self.server.read(file_id, self.rng.randrange(n), self.trace)

    def pad(self, file_id: str, used: int, planned: int) -> None:
        if used > planned:
            raise PlanViolation(f"{used} retrievals from {file_id} needed, plan allows {planned}")
        self.dummy(file_id, planned - used)

    def region(self, r: int, file_id: str = "Fd") -> list[NodeRecord]:
        blob = self.read_span(file_id, self.hdr.first_pages[r], self.k)
        return decode_region_group(blob, self.hdr.record)

    def lookup(self, ri: int, rj: int) -> tuple[int, int]:
        hdr = self.hdr
        rank = key_rank(ri, rj, hdr.num_regions, hdr.directed)
        page, off = lookup_position(rank, hdr.page_size)
        self.round()
        return rank, read_lookup(self.read("Fl", page), off)

    def index_window(self, file_id: str, target: int, width: int) -> tuple[int, bytes]:
        """Round-3 retrieval of ``width`` pages starting at ``target``, shifted back at the file end."""
        n = self.server.files[file_id].page_count
        start = max(0, min(target, n - width))
        return start, self.read_span(file_id, start, width)

    def check(self, plan_rounds) -> None:
        if self.trace.view() != tuple(tuple(r) for r in plan_rounds):
            raise PlanViolation(f"trace {self.trace.view()} deviates from plan {plan_rounds}")


def _snap(records: Sequence[NodeRecord], p) -> tuple[int, bool]:
    if not records:
        raise QueryError(f"region of point {tuple(p)} holds no nodes")
    x, y = float(p[0]), float(p[1])
    best = min(records, key=lambda r: ((r.x - x) ** 2 + (r.y - y) ** 2, r.node_id))
    return best.node_id, not (best.x == x and best.y == y)


def _adjacency(records: Iterable[NodeRecord]) -> dict:
    adj: dict = {}
    for rec in records:
        adj.setdefault(rec.node_id, []).extend((t, w) for t, w, _, _ in rec.arcs)
    return adj


def _finish(sess: _Session, path, s, t, snapped, started, answered_by="", measure=True) -> QueryResult:
    sess.check(sess.hdr.plan)
    sess.trace.client_time = (time.perf_counter() - started) if measure else 0.0
    return QueryResult(path, sess.trace, simulate_response_time(sess.trace, model=sess.server.model),
                       s, t, snapped, answered_by, dict(sess.real))


def _fetch_regions(sess: _Session, regions: Sequence[int], file_id: str) -> dict[int, list[NodeRecord]]:
    """Fetch each distinct region once; repeats become dummies later."""
    got: dict[int, list[NodeRecord]] = {}
    for r in regions:
        if r not in got:
            got[r] = sess.region(r, file_id)
    return got


# ---------------------------------------------------------------------------
# Index schemes


def query_ci(db, s, t, rng=None, measure=True) -> QueryResult:
    """Concise index: look-up, region set, then the regions it names."""
    started = time.perf_counter()
    sess = _Session(db, rng)
    hdr = sess.hdr
    ri, rj = hdr.locate(s), hdr.locate(t)
    rank, target = sess.lookup(ri, rj)
    sess.round()
    start, blob = sess.index_window("Fi", target, hdr.max_span)
    _, members = read_index_entry(blob[(target - start) * hdr.page_size:], rank)
    sess.round()
    order = [ri, rj] + sorted(set(members) - {ri, rj})
    got = _fetch_regions(sess, order, "Fd")
    sess.pad("Fd", len(got) * sess.k, (hdr.m + 2) * sess.k)
    sid, s_snap = _snap(got[ri], s)
    tid, t_snap = _snap(got[rj], t)
    path = shortest_path(_adjacency(r for recs in got.values() for r in recs), sid, tid)
    return _finish(sess, path, sid, tid, (s_snap, t_snap), started, "set", measure)


def _subgraph_adjacency(records: Iterable[NodeRecord], edges, directed: bool) -> dict:
    adj = _adjacency(records)
    for u, v, w in edges:
        adj.setdefault(u, []).append((v, w))
        if not directed:
            adj.setdefault(v, []).append((u, w))
    return adj


def query_pi(db, s, t, rng=None, measure=True) -> QueryResult:
    """Passage index (also the clustered variant): subgraph plus the two end regions."""
    started = time.perf_counter()
    sess = _Session(db, rng)
    hdr = sess.hdr
    ri, rj = hdr.locate(s), hdr.locate(t)
    rank, target = sess.lookup(ri, rj)
    sess.round()
    start, blob = sess.index_window("Fi", target, hdr.h)
    _, edges = read_index_entry(blob[(target - start) * hdr.page_size:], rank)
    got = _fetch_regions(sess, [ri, rj], "Fd")
    sess.pad("Fd", len(got) * sess.k, 2 * sess.k)
    sid, s_snap = _snap(got[ri], s)
    tid, t_snap = _snap(got[rj], t)
    adj = _subgraph_adjacency((r for recs in got.values() for r in recs), sorted(edges), hdr.directed)
    path = shortest_path(adj, sid, tid)
    return _finish(sess, path, sid, tid, (s_snap, t_snap), started, "subgraph", measure)


def query_hy(db, s, t, rng=None, measure=True) -> QueryResult:
    """Hybrid index over the combined file: r pages, then a fixed-size second batch."""
    started = time.perf_counter()
    sess = _Session(db, rng)
    hdr = sess.hdr
    B = hdr.page_size
    ri, rj = hdr.locate(s), hdr.locate(t)
    rank, target = sess.lookup(ri, rj)
    sess.round()
    start, window = sess.index_window("FiFd", target, hdr.r)
    first = window[(target - start) * B:(target - start + 1) * B]
    span = entry_span(first, rank, B)
    sess.round()
    have_end = start + hdr.r
    extra = max(0, target + span - have_end)
    blob = window[(target - start) * B:] + sess.read_span("FiFd", have_end, extra)
    kind, content = read_index_entry(blob, rank)
    used = extra
    if kind == "set":
        order = [ri, rj] + sorted(set(content) - {ri, rj})
    else:
        order = [ri, rj]
    got = _fetch_regions(sess, order, "FiFd")
    used += len(got) * sess.k
    sess.pad("FiFd", used, hdr.fixed_max)
    sid, s_snap = _snap(got[ri], s)
    tid, t_snap = _snap(got[rj], t)
    records = (r for recs in got.values() for r in recs)
    if kind == "set":
        adj = _adjacency(records)
    else:
        adj = _subgraph_adjacency(records, sorted(content), hdr.directed)
    path = shortest_path(adj, sid, tid)
    return _finish(sess, path, sid, tid, (s_snap, t_snap), started, kind, measure)


# ---------------------------------------------------------------------------
# Search baselines


def lm_search(s: int, t: int, regions: dict, fetch: Callable[[int], list], directed: bool):
    """A* with landmark bounds over lazily fetched regions.

    ``regions`` maps already fetched region ids to their records (it must
    hold the regions of ``s`` and ``t``); ``fetch`` retrieves another one.
    Returns ``(path or None, number of fetches made)``.
    """
    rec: dict[int, NodeRecord] = {r.node_id: r for recs in regions.values() for r in recs}
    fetched = set(regions)
    lt = rec[t].landmarks
    fetches = 0
    g = {s: 0.0}
    prev: dict[int, int] = {}
    # entries are (f, node, g); an entry is stale once g[node] improved.
    # Without a closed set a node whose cost drops is simply expanded again.
    heap = [(landmark_bound(rec[s].landmarks, lt, directed), s, 0.0)]
    while heap:
        _, u, gu = heapq.heappop(heap)
        if gu > g[u]:
            continue
        if u == t:
            break
        for v, w, reg, _ in rec[u].arcs:
            nd = gu + w
            if nd >= g.get(v, math.inf):
                continue
            if reg not in fetched:
                fetched.add(reg)
                fetches += 1
                for r in fetch(reg):
                    rec[r.node_id] = r
            g[v] = nd
            prev[v] = u
            heapq.heappush(heap, (nd + landmark_bound(rec[v].landmarks, lt, directed), v, nd))
    else:
        return None, fetches
    nodes = [t]
    while nodes[-1] != s:
        nodes.append(prev[nodes[-1]])
    return Path(tuple(reversed(nodes)), g[t]), fetches


def af_search(s: int, t: int, s_region: int, t_region: int, regions: dict, fetch: Callable[[int], list]):
    """Dijkstra that only follows arcs flagged for ``t_region``; a region is fetched when one of its nodes is settled."""
    rec: dict[int, NodeRecord] = {r.node_id: r for recs in regions.values() for r in recs}
    fetched = set(regions)
    byte, bit = divmod(t_region, 8)
    fetches = 0
    dist = {s: 0.0}
    where = {s: s_region}
    prev: dict[int, int] = {}
    done = set()
    heap = [(0.0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == t:
            break
        if where[u] not in fetched:
            fetched.add(where[u])
            fetches += 1
            for r in fetch(where[u]):
                rec[r.node_id] = r
        for v, w, reg, flags in rec[u].arcs:
            if not (flags[byte] >> bit) & 1 or v in done:
                continue
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                where[v] = reg
                heapq.heappush(heap, (nd, v))
    if t not in done:
        return None, fetches
    nodes = [t]
    while nodes[-1] != s:
        nodes.append(prev[nodes[-1]])
    return Path(tuple(reversed(nodes)), dist[t]), fetches


def _search_query(db, s, t, rng, measure, kind: str) -> QueryResult:
    started = time.perf_counter()
    sess = _Session(db, rng)
    hdr = sess.hdr
    ri, rj = hdr.locate(s), hdr.locate(t)
    planned = len(hdr.plan) - 2
    sess.round()
    got = _fetch_regions(sess, [ri, rj], "Fd")
    sess.pad("Fd", len(got) * sess.k, 2 * sess.k)
    sid, s_snap = _snap(got[ri], s)
    tid, t_snap = _snap(got[rj], t)
    count = [0]

    def fetch(r):
        count[0] += 1
        if count[0] > planned:
            raise PlanViolation(f"search needs more than the planned {planned} region rounds")
        sess.round()
        return sess.region(r)

    if kind == "LM":
        path, _ = lm_search(sid, tid, got, fetch, hdr.directed)
    else:
        path, _ = af_search(sid, tid, ri, rj, got, fetch)
    for _ in range(planned - count[0]):
        sess.round()
        sess.dummy("Fd", sess.k)
    return _finish(sess, path, sid, tid, (s_snap, t_snap), started, "search", measure)


def query_lm(db, s, t, rng=None, measure=True) -> QueryResult:
    return _search_query(db, s, t, rng, measure, "LM")


def query_af(db, s, t, rng=None, measure=True) -> QueryResult:
    return _search_query(db, s, t, rng, measure, "AF")


QUERY_FUNCS = {"CI": query_ci, "PI": query_pi, "PI*": query_pi, "HY": query_hy, "LM": query_lm, "AF": query_af}


def query(db, s, t, rng=None, measure=True) -> QueryResult:
    """Dispatch on the build's scheme."""
    return QUERY_FUNCS[db.scheme](db, s, t, rng=rng, measure=measure)
