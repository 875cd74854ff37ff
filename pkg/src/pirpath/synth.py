"""Synthetic road networks for fixtures, demos and desk-scale experiments."""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import Delaunay

from .graph import RoadNetwork

# Node/edge counts of well-known road network benchmarks, used to generate
# look-alike networks of the same order.
BENCHMARK_SIZES = {
    "oldenburg": (6_105, 7_029),
    "germany": (28_867, 30_429),
    "argentina": (85_287, 88_357),
    "denmark": (136_377, 143_612),
    "india": (149_566, 155_483),
    "north_america": (175_813, 179_179),
}


def grid_network(rows: int = 4, cols: int = 4, weight: float = 1.0) -> RoadNetwork:
    """Undirected lattice with unit spacing; node id = row * cols + col.

    ``grid_network(4, 4)`` is the 16-node, 24-edge "T16" fixture.
    """
    coords = {r * cols + c: (float(c), float(r)) for r in range(rows) for c in range(cols)}
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, weight))
            if r + 1 < rows:
                edges.append((v, v + cols, weight))
    return RoadNetwork(coords, edges, directed=False)


def synthetic_road_network(
    n_nodes: int,
    n_edges: int | None = None,
    seed: int = 0,
    extent: float = 10_000.0,
    clusters: int = 6,
) -> RoadNetwork:
    """Connected planar network with Euclidean edge weights.

    Points are a mix of uniform background and Gaussian "towns".  The edge
    set is the Euclidean minimum spanning tree of the Delaunay graph plus
    the shortest remaining Delaunay edges (with some random choice among
    them) until ``n_edges`` is reached.  The default edge count follows the
    sparse degree of real road data (about 1.15 edges per node).
    """
    if n_nodes < 3:
        raise ValueError("need at least 3 nodes")
    if n_edges is None:
        n_edges = int(round(n_nodes * 1.15))
    if n_edges < n_nodes - 1:
        raise ValueError("n_edges must be at least n_nodes - 1 for connectivity")
    rng = np.random.default_rng(seed)

    n_town = int(n_nodes * 0.35)
    centres = rng.uniform(0.1 * extent, 0.9 * extent, size=(clusters, 2))
    which = rng.integers(0, clusters, size=n_town)
    town = centres[which] + rng.normal(scale=0.05 * extent, size=(n_town, 2))
    background = rng.uniform(0, extent, size=(n_nodes - n_town, 2))
    pts = np.clip(np.vstack([town, background]), 0, extent)
    pts = np.round(pts, 3)
    # coordinates must be distinct for coordinate-addressed queries
    _, uniq = np.unique(pts, axis=0, return_index=True)
    while len(uniq) < n_nodes:
        dup = np.setdiff1d(np.arange(n_nodes), uniq)
        pts[dup] = np.round(rng.uniform(0, extent, size=(len(dup), 2)), 3)
        _, uniq = np.unique(pts, axis=0, return_index=True)

    tri = Delaunay(pts)
    simplices = tri.simplices
    pairs = np.vstack([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [0, 2]]])
    pairs.sort(axis=1)
    pairs = np.unique(pairs, axis=0)
    lengths = np.hypot(*(pts[pairs[:, 0]] - pts[pairs[:, 1]]).T)

    g = coo_matrix((lengths, (pairs[:, 0], pairs[:, 1])), shape=(n_nodes, n_nodes))
    mst = minimum_spanning_tree(g).tocoo()
    chosen = {(min(a, b), max(a, b)) for a, b in zip(mst.row.tolist(), mst.col.tolist())}

    extra = n_edges - len(chosen)
    if extra > 0:
        rest = [k for k in range(len(pairs)) if (int(pairs[k, 0]), int(pairs[k, 1])) not in chosen]
        rest = np.array(rest, dtype=np.int64)
        # prefer short links, as real road graphs do, with a little noise
        score = lengths[rest] * rng.uniform(0.5, 1.5, size=len(rest))
        take = rest[np.argsort(score, kind="stable")[:extra]]
        chosen |= {(int(pairs[k, 0]), int(pairs[k, 1])) for k in take}

    coords = {i: (float(pts[i, 0]), float(pts[i, 1])) for i in range(n_nodes)}
    edges = []
    for a, b in sorted(chosen):
        w = float(np.hypot(pts[a, 0] - pts[b, 0], pts[a, 1] - pts[b, 1]))
        edges.append((a, b, w))
    return RoadNetwork(coords, edges, directed=False)


def benchmark_like(name: str, seed: int = 0) -> RoadNetwork:
    """A synthetic network with the node/edge counts of a named benchmark."""
    n, m = BENCHMARK_SIZES[name]
    return synthetic_road_network(n, m, seed=seed)
