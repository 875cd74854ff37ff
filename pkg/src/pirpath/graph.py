"""Road network model, text-format parsing and the exact shortest-path oracle.

Networks are read from two text files::

    # coordinates file
    v <nodeId> <x> <y>

    # edge file
    p <directed|undirected> <nodeCount> <edgeCount>
    e <fromId> <toId> <weight>

Lines starting with ``#`` are comments.  Node ids are arbitrary non-negative
integers; coordinates are planar and unit-free.
"""

from __future__ import annotations

import heapq
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

import numpy as np


class ParseError(ValueError):
    """Malformed network text; carries the offending line number."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class NetworkError(ValueError):
    """Structurally invalid network (dangling endpoint, bad weight)."""


# One adjacency entry: (target node id, weight, edge id).
Arc = tuple[int, float, int]


@dataclass
class RoadNetwork:
    """Weighted road graph with planar node coordinates.

    ``edges[k]`` is edge id ``k``.  For undirected networks every edge is
    listed once and appears in the adjacency of both endpoints under the same
    id.
    """

    coords: dict[int, tuple[float, float]]
    edges: list[tuple[int, int, float]]
    directed: bool = False
    allow_zero_weights: bool = False
    adjacency: dict[int, list[Arc]] = field(init=False, repr=False)

    def __post_init__(self):
        adj: dict[int, list[Arc]] = {v: [] for v in self.coords}
        for eid, (u, v, w) in enumerate(self.edges):
            if u not in adj or v not in adj:
                raise NetworkError(f"edge {eid} ({u}->{v}) has a dangling endpoint")
            if not (w > 0 or (self.allow_zero_weights and w == 0)) or math.isinf(w):
                raise NetworkError(f"edge {eid} ({u}->{v}) has invalid weight {w!r}")
            adj[u].append((v, w, eid))
            if not self.directed:
                adj[v].append((u, w, eid))
        self.adjacency = adj

    @property
    def num_nodes(self) -> int:
        return len(self.coords)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def node_ids(self) -> list[int]:
        return sorted(self.coords)

    def out_arcs(self, u: int) -> list[Arc]:
        return self.adjacency[u]

    def reverse(self) -> "RoadNetwork":
        """Same network with every edge direction flipped."""
        return RoadNetwork(
            dict(self.coords),
            [(v, u, w) for u, v, w in self.edges],
            directed=self.directed,
            allow_zero_weights=self.allow_zero_weights,
        )

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [c[0] for c in self.coords.values()]
        ys = [c[1] for c in self.coords.values()]
        return min(xs), min(ys), max(xs), max(ys)


@dataclass(frozen=True)
class Path:
    """A node sequence and its cost.  An s == t path has one node, no edges."""

    nodes: tuple[int, ...]
    cost: float

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.nodes[:-1], self.nodes[1:]))

    def edge_ids(self, net: RoadNetwork) -> list[int]:
        """Resolve each hop to the cheapest matching edge id (smallest id on ties)."""
        out = []
        for u, v in self.edges:
            best = min(
                ((w, eid) for tgt, w, eid in net.adjacency[u] if tgt == v),
                default=None,
            )
            if best is None:
                raise NetworkError(f"no edge {u}->{v} in network")
            out.append(best[1])
        return out


def path_cost(net: RoadNetwork, path: Path) -> float:
    """Sum of the edge weights along ``path`` as resolved in ``net``."""
    return float(sum(net.edges[e][2] for e in path.edge_ids(net)))


def _open_text(src: Union[str, bytes, IO]) -> IO:
    if isinstance(src, bytes):
        return io.StringIO(src.decode())
    if isinstance(src, str):
        return io.StringIO(src)
    return src


def parse_network(coord_text, edge_text) -> RoadNetwork:
    """Parse coordinate and edge text (str, bytes or file objects)."""
    coords: dict[int, tuple[float, float]] = {}
    for lineno, raw in enumerate(_open_text(coord_text), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "v" or len(parts) != 4:
            raise ParseError(f"expected 'v <id> <x> <y>', got {line!r}", lineno)
        try:
            nid, x, y = int(parts[1]), float(parts[2]), float(parts[3])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", lineno) from None
        if nid in coords:
            raise ParseError(f"duplicate node id {nid}", lineno)
        coords[nid] = (x, y)

    header = None
    edges: list[tuple[int, int, float]] = []
    for lineno, raw in enumerate(_open_text(edge_text), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "p":
            if header is not None or len(parts) != 4 or parts[1] not in ("directed", "undirected"):
                raise ParseError(f"bad header {line!r}", lineno)
            try:
                header = (parts[1] == "directed", int(parts[2]), int(parts[3]))
            except ValueError:
                raise ParseError(f"bad count in {line!r}", lineno) from None
            continue
        if parts[0] != "e" or len(parts) != 4:
            raise ParseError(f"expected 'e <from> <to> <weight>', got {line!r}", lineno)
        if header is None:
            raise ParseError("edge line before 'p' header", lineno)
        try:
            u, v, w = int(parts[1]), int(parts[2]), float(parts[3])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", lineno) from None
        if not w > 0 or math.isinf(w):
            raise ParseError(f"non-positive weight {w}", lineno)
        edges.append((u, v, w))

    if header is None:
        if coords:
            raise ParseError("missing 'p' header in edge file")
        header = (False, 0, 0)
    directed, n_declared, m_declared = header
    if n_declared != len(coords):
        raise ParseError(f"header declares {n_declared} nodes, coordinates file has {len(coords)}")
    if m_declared != len(edges):
        raise ParseError(f"header declares {m_declared} edges, found {len(edges)}")
    return RoadNetwork(coords, edges, directed=directed)


def format_network(net: RoadNetwork) -> tuple[str, str]:
    """Inverse of :func:`parse_network`; floats are written with ``repr``."""
    coord_lines = [f"v {v} {x!r} {y!r}" for v, (x, y) in sorted(net.coords.items())]
    kind = "directed" if net.directed else "undirected"
    edge_lines = [f"p {kind} {net.num_nodes} {net.num_edges}"]
    edge_lines += [f"e {u} {v} {w!r}" for u, v, w in net.edges]
    return "\n".join(coord_lines) + "\n", "\n".join(edge_lines) + "\n"


def write_network(net: RoadNetwork, coord_path, edge_path) -> None:
    coord_text, edge_text = format_network(net)
    with open(coord_path, "w") as f:
        f.write(coord_text)
    with open(edge_path, "w") as f:
        f.write(edge_text)


def read_network(coord_path, edge_path) -> RoadNetwork:
    with open(coord_path) as c, open(edge_path) as e:
        return parse_network(c, e)


def shortest_path(
    adjacency: Mapping[int, Sequence],
    s: int,
    t: int,
    allowed: Optional[Iterable[int]] = None,
) -> Optional[Path]:
    """Dijkstra over a plain adjacency mapping ``u -> [(v, w, ...), ...]``.

    Equal tentative costs pop the smaller node id first, so the returned
    path is deterministic.  Returns ``None`` when ``t`` is unreachable.
    """
    if allowed is not None:
        allowed = allowed if isinstance(allowed, (set, frozenset)) else set(allowed)
        if s not in allowed or t not in allowed:
            raise ValueError("source and target must be in the allowed node set")
    dist = {s: 0.0}
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
        for arc in adjacency.get(u, ()):
            v = arc[0]
            if v in done or (allowed is not None and v not in allowed):
                continue
            nd = d + arc[1]
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if t not in done:
        return None
    nodes = [t]
    while nodes[-1] != s:
        nodes.append(prev[nodes[-1]])
    return Path(tuple(reversed(nodes)), dist[t])


def dijkstra(net: RoadNetwork, s: int, t: int) -> Optional[Path]:
    """Exact minimum-cost path from ``s`` to ``t``, or ``None`` if unreachable."""
    for v in (s, t):
        if v not in net.coords:
            raise KeyError(f"unknown node {v}")
    return shortest_path(net.adjacency, s, t)


def dijkstra_restricted(net: RoadNetwork, allowed_nodes, s: int, t: int) -> Optional[Path]:
    """Minimum-cost path using only nodes in ``allowed_nodes``."""
    return shortest_path(net.adjacency, s, t, allowed=allowed_nodes)


def single_source_costs(net: RoadNetwork, s: int) -> dict[int, float]:
    """Costs from ``s`` to every reachable node (same tie rule as :func:`dijkstra`)."""
    dist = {s: 0.0}
    done = set()
    heap = [(0.0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w, _ in net.adjacency[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


# ---------------------------------------------------------------------------
# Array views for the vectorised precomputation paths.


@dataclass
class CsrView:
    """Index-compressed view of a network: node ``ids[k]`` is row ``k``."""

    ids: np.ndarray
    index: dict[int, int]
    matrix: "object"  # scipy.sparse.csr_matrix
    tails: np.ndarray
    heads: np.ndarray
    edge_of: np.ndarray  # edge id realising the (tail, head) entry


def csr_view(net: RoadNetwork, order: Optional[Sequence[int]] = None) -> CsrView:
    """Build a de-duplicated CSR matrix (cheapest parallel edge wins).

    Undirected networks get a symmetric matrix.  Zero weights are stored
    explicitly; scipy's csgraph treats stored zeros as edges.
    """
    from scipy.sparse import csr_matrix

    ids = np.array(order if order is not None else net.node_ids(), dtype=np.int64)
    index = {int(v): k for k, v in enumerate(ids)}
    n = len(ids)
    if net.num_edges:
        arr = np.array([(index[u], index[v], w) for u, v, w in net.edges], dtype=np.float64)
        tails = arr[:, 0].astype(np.int64)
        heads = arr[:, 1].astype(np.int64)
        weights = arr[:, 2]
        eids = np.arange(net.num_edges, dtype=np.int64)
        if not net.directed:
            tails, heads = np.concatenate([tails, heads]), np.concatenate([heads, tails])
            weights = np.concatenate([weights, weights])
            eids = np.concatenate([eids, eids])
        # cheapest first, then smallest edge id
        order_ = np.lexsort((eids, weights, heads, tails))
        tails, heads, weights, eids = tails[order_], heads[order_], weights[order_], eids[order_]
        keep = np.ones(len(tails), dtype=bool)
        keep[1:] = (tails[1:] != tails[:-1]) | (heads[1:] != heads[:-1])
        tails, heads, weights, eids = tails[keep], heads[keep], weights[keep], eids[keep]
    else:
        tails = heads = eids = np.zeros(0, dtype=np.int64)
        weights = np.zeros(0)
    mat = csr_matrix((weights, (tails, heads)), shape=(n, n))
    mat.sort_indices()
    return CsrView(ids, index, mat, tails, heads, eids)
