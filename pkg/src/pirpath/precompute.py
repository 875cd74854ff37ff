"""Offline computation over border-node shortest paths.

The region sets and passage subgraphs are derived from shortest-path trees
rooted at every border node.  For each tree a per-node bitmask over target
regions is pushed from the border-node leaves up to the root; a node (or the
tree edge into it) lies on some tree path to a border node of region ``j``
exactly when bit ``j`` of its mask is set.  Any shortest path between a
first-exit and a last-entry border node is as good as another, so which of
several tied paths the solver keeps does not matter for correctness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.sparse.csgraph import dijkstra as sp_dijkstra

from .graph import RoadNetwork, csr_view, dijkstra, dijkstra_restricted
from .partition import AugmentedNetwork, PackedKdTree

Key = tuple[int, int]


@dataclass(frozen=True)
class RegionSet:
    key: Key
    members: tuple[int, ...]

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class PassageSubgraph:
    key: Key
    edges: tuple[tuple[int, int, float], ...]

    def __len__(self):
        return len(self.edges)


Payload = Union[RegionSet, PassageSubgraph]


@dataclass(frozen=True)
class PlanConstants:
    m: int = 0
    h: int = 0
    r: int = 0
    max_span: int = 0  # over all index entries, whatever their kind


def index_keys(num_regions: int, directed: bool) -> list[Key]:
    """Key space of the index in storage order (ascending ``(i, j)``)."""
    if directed:
        return [(i, j) for i in range(num_regions) for j in range(num_regions)]
    return [(i, j) for i in range(num_regions) for j in range(i, num_regions)]


def canonical_key(i: int, j: int, directed: bool) -> Key:
    return (i, j) if directed or i <= j else (j, i)


# ---------------------------------------------------------------------------
# Border-pair closure


def _tree_depth(parent: np.ndarray) -> np.ndarray:
    """Hop depth of every vertex in a forest given as a parent array (roots point to themselves)."""
    depth = (parent != np.arange(len(parent))).astype(np.int64)
    anc = parent.copy()
    while True:
        nxt = anc[anc]
        depth = depth + depth[anc]
        if np.array_equal(nxt, anc):
            return depth
        anc = nxt


def _propagate(mask: np.ndarray, parent: np.ndarray, depth: np.ndarray) -> None:
    """OR every vertex's mask into all of its ancestors, in place."""
    order = np.lexsort((parent, -depth))
    depth_sorted = depth[order]
    bounds = np.flatnonzero(np.diff(depth_sorted)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(order)]])
    for a, b in zip(starts, stops):
        if depth_sorted[a] == 0:
            break
        nodes = order[a:b]
        par = parent[nodes]
        first = np.concatenate([[0], np.flatnonzero(np.diff(par)) + 1])
        mask[par[first]] |= np.bitwise_or.reduceat(mask[nodes], first, axis=0)


def _canonical(i: np.ndarray, j: np.ndarray, directed: bool):
    if directed:
        return i, j
    return np.minimum(i, j), np.maximum(i, j)


def _grouped(chunks: list, R: int, width: int):
    """Decode ``(i * R + j) * width + x`` keys into ``((i, j), [x, ...])`` groups."""
    allk = np.unique(np.concatenate(chunks))
    ij, x = np.divmod(allk, width)
    cut = np.flatnonzero(np.diff(ij)) + 1
    for grp_ij, grp_x in zip(np.split(ij, cut), np.split(x, cut)):
        i, j = divmod(int(grp_ij[0]), R)
        yield (i, j), grp_x.tolist()


@dataclass
class BorderClosure:
    """Raw border-pair results: region sets and host-edge sets per key."""

    sets: dict[Key, set[int]]
    edges: dict[Key, set[int]]


def border_closure(aug: AugmentedNetwork, tree: PackedKdTree, want_sets: bool = True,
                   want_edges: bool = True, max_cells: int = 40_000_000) -> BorderClosure:
    """Regions and host edges on border-pair shortest paths, for every key."""
    R = tree.num_regions
    keys = index_keys(R, aug.directed)
    sets: dict[Key, set[int]] = {k: set() for k in keys}
    edges: dict[Key, set[int]] = {k: set() for k in keys}
    borders = aug.borders
    if not borders:
        return BorderClosure(sets, edges)

    view = csr_view(aug)
    n = len(view.ids)
    E = max(aug.host_edge, default=-1) + 1
    node_region = np.full(n, -1, dtype=np.int64)
    for v, r in tree.region_of.items():
        node_region[view.index[v]] = r
    bidx = np.array([view.index[b.node_id] for b in borders], dtype=np.int64)
    breg = np.array([b.regions for b in borders], dtype=np.int64)

    seed = np.zeros((n, R), dtype=bool)
    seed[bidx, breg[:, 0]] = True
    seed[bidx, breg[:, 1]] = True
    seed = np.packbits(seed, axis=1)
    arc_key = view.tails * n + view.heads
    arc_host = np.asarray(aug.host_edge, dtype=np.int64)[view.edge_of]

    directed = aug.directed
    set_keys, edge_keys = [], []
    batch = max(1, min(64, max_cells // max(1, n * R)))
    for start in range(0, len(bidx), batch):
        src = bidx[start:start + batch]
        src_reg = breg[start:start + batch]
        B = len(src)
        dist, pred = sp_dijkstra(view.matrix, directed=True, indices=src, return_predecessors=True)
        flat = np.arange(B * n, dtype=np.int64)
        pred = pred.astype(np.int64).ravel()
        has_parent = pred >= 0
        parent = flat.copy()
        parent[has_parent] = (flat[has_parent] // n) * n + pred[has_parent]
        mask = np.tile(seed, (B, 1))
        mask[~np.isfinite(dist).ravel()] = 0
        _propagate(mask, parent, _tree_depth(parent))

        live = np.flatnonzero(mask.any(axis=1))
        sub, js = np.nonzero(np.unpackbits(mask[live], axis=1, count=R))
        rows = live[sub]
        srcs = rows // n
        verts = rows % n
        if want_sets:
            real = node_region[verts] >= 0
            for c in range(2):
                i, j = _canonical(src_reg[srcs[real], c], js[real], directed)
                set_keys.append(np.unique((i * R + j) * R + node_region[verts[real]]))
        if want_edges:
            tree_edge = has_parent[rows]
            r_, j_, s_ = rows[tree_edge], js[tree_edge], srcs[tree_edge]
            host = arc_host[np.searchsorted(arc_key, pred[r_] * n + (r_ % n))]
            for c in range(2):
                i, j = _canonical(src_reg[s_, c], j_, directed)
                edge_keys.append(np.unique((i * R + j) * E + host))
        del mask

    if want_sets and set_keys:
        for (i, j), regs in _grouped(set_keys, R, R):
            sets[(i, j)] = set(regs) - {i, j}
    if want_edges and edge_keys:
        for key, eids in _grouped(edge_keys, R, E):
            edges[key] = set(eids)
    return BorderClosure(sets, edges)

    view = csr_view(aug)
    n = len(view.ids)
    E = max(aug.host_edge, default=-1) + 1
    node_region = np.full(n, -1, dtype=np.int64)
    for v, r in tree.region_of.items():
        node_region[view.index[v]] = r
    bidx = np.array([view.index[b.node_id] for b in borders], dtype=np.int64)
    breg = np.array([b.regions for b in borders], dtype=np.int64)

    seed = np.zeros((n, R), dtype=bool)
    seed[bidx, breg[:, 0]] = True
    seed[bidx, breg[:, 1]] = True
    seed = np.packbits(seed, axis=1)
    arc_key = view.tails * n + view.heads
    arc_host = np.asarray(aug.host_edge, dtype=np.int64)[view.edge_of]

    set_keys, edge_keys = [], []
    batch = max(1, min(64, max_cells // max(1, n * R)))
    for start in range(0, len(bidx), batch):
        src = bidx[start:start + batch]
        src_reg = breg[start:start + batch]
        B = len(src)
        dist, pred = sp_dijkstra(view.matrix, directed=True, indices=src, return_predecessors=True)
        flat = np.arange(B * n, dtype=np.int64)
        pred = pred.astype(np.int64).ravel()
        has_parent = pred >= 0
        parent = flat.copy()
        parent[has_parent] = (flat[has_parent] // n) * n + pred[has_parent]
        reach = np.isfinite(dist).ravel()
        mask = np.where(reach[:, None], np.tile(seed, (B, 1)), 0).astype(np.uint8)
        _propagate(mask, parent, _tree_depth(parent))
        bits = np.unpackbits(mask, axis=1, count=R).astype(bool)

        rows, js = np.nonzero(bits)
        srcs = rows // n
        verts = rows % n
        if want_sets:
            real = node_region[verts] >= 0
            for c in range(2):
                i = src_reg[srcs[real], c]
                set_keys.append(np.unique((i * R + js[real]) * R + node_region[verts[real]]))
        if want_edges:
            tree_edge = has_parent[rows]
            r_, j_, s_ = rows[tree_edge], js[tree_edge], srcs[tree_edge]
            pos = np.searchsorted(arc_key, pred[r_] * n + (r_ % n))
            host = arc_host[pos]
            for c in range(2):
                i = src_reg[s_, c]
                edge_keys.append(np.unique((i * R + j_) * E + host))
        del bits, mask

    directed = aug.directed
    if want_sets and set_keys:
        allk = np.unique(np.concatenate(set_keys))
        ij, reg = np.divmod(allk, R)
        i_, j_ = np.divmod(ij, R)
        for i, j, r in zip(i_.tolist(), j_.tolist(), reg.tolist()):
            sets[canonical_key(i, j, directed)].add(r)
        for (i, j), s in sets.items():
            s.discard(i)
            s.discard(j)
    if want_edges and edge_keys:
        allk = np.unique(np.concatenate(edge_keys))
        ij, eid = np.divmod(allk, E)
        i_, j_ = np.divmod(ij, R)
        for i, j, e in zip(i_.tolist(), j_.tolist(), eid.tolist()):
            edges[canonical_key(i, j, directed)].add(e)
    return BorderClosure(sets, edges)


def _subgraph_edges(net: RoadNetwork, eids: Iterable[int]) -> tuple[tuple[int, int, float], ...]:
    out = set()
    for e in eids:
        u, v, w = net.edges[e]
        if not net.directed and u > v:
            u, v = v, u
        out.add((u, v, w))
    return tuple(sorted(out))


def compute_region_sets(aug: AugmentedNetwork, tree: PackedKdTree,
                        closure: Optional[BorderClosure] = None) -> dict[Key, RegionSet]:
    """S_{i,j} for every stored key."""
    if closure is None:
        closure = border_closure(aug, tree, want_edges=False)
    return {k: RegionSet(k, tuple(sorted(s))) for k, s in closure.sets.items()}


def compute_passage_subgraphs(aug: AugmentedNetwork, tree: PackedKdTree,
                              closure: Optional[BorderClosure] = None) -> dict[Key, PassageSubgraph]:
    """G_{i,j} for every stored key, over real endpoints (full host edges)."""
    if closure is None:
        closure = border_closure(aug, tree, want_sets=False)
    base = aug.base if aug.base is not None else aug
    return {k: PassageSubgraph(k, _subgraph_edges(base, e)) for k, e in closure.edges.items()}


def hy_replace(region_sets: Mapping[Key, RegionSet], subgraphs: Mapping[Key, PassageSubgraph],
               threshold: Optional[int]) -> dict[Key, Payload]:
    """Swap every region set larger than ``threshold`` for its subgraph.

    ``threshold=None`` keeps every set.  A negative threshold replaces all
    keys, empty sets included.
    """
    if set(region_sets) != set(subgraphs):
        raise ValueError("region sets and subgraphs cover different keys")
    out: dict[Key, Payload] = {}
    for k in sorted(region_sets):
        s = region_sets[k]
        out[k] = subgraphs[k] if threshold is not None and len(s) > threshold else s
    return out


def cardinality_histogram(region_sets: Iterable[RegionSet]) -> dict[int, int]:
    hist: dict[int, int] = {}
    for s in region_sets:
        hist[len(s)] = hist.get(len(s), 0) + 1
    return dict(sorted(hist.items()))


# ---------------------------------------------------------------------------
# Landmarks


def _to_anchor_costs(view, anchors_idx: np.ndarray, directed: bool) -> np.ndarray:
    """cost(v -> a) for every node v (rows) and anchor a (columns)."""
    mat = view.matrix.T.tocsr() if directed else view.matrix
    d = sp_dijkstra(mat, directed=True, indices=anchors_idx)
    return np.atleast_2d(d).T


def compute_landmarks(net: RoadNetwork, anchor_count: int) -> tuple[dict[int, tuple[float, ...]], list[int]]:
    """Landmark vectors (cost from each node to each anchor) and the anchors.

    Anchors are picked greedily: the first is the node farthest from the
    smallest node id, each next one the node farthest from all anchors so
    far.  Unreachable costs are ``inf``; ties go to the smaller node id.
    """
    if anchor_count < 1:
        raise ValueError("anchor_count must be >= 1")
    view = csr_view(net)
    n = len(view.ids)
    anchor_count = min(anchor_count, n)
    sym = view.matrix if not net.directed else view.matrix.maximum(view.matrix.T)
    nearest = sp_dijkstra(sym, directed=False, indices=[0]).ravel()
    chosen: list[int] = []
    for _ in range(anchor_count):
        score = np.where(np.isfinite(nearest), nearest, -1.0)
        score[chosen] = -2.0
        pick = int(np.argmax(score))  # first maximum = smallest id
        chosen.append(pick)
        d = sp_dijkstra(sym, directed=False, indices=[pick]).ravel()
        nearest = np.minimum(nearest if len(chosen) > 1 else d, d)
    costs = _to_anchor_costs(view, np.array(chosen), net.directed)
    vectors = {int(view.ids[k]): tuple(float(x) for x in costs[k]) for k in range(n)}
    return vectors, [int(view.ids[k]) for k in chosen]


def landmark_bound(lu: Sequence[float], lt: Sequence[float], directed: bool) -> float:
    """Lower bound on cost(u, t) from the two landmark vectors."""
    best = 0.0
    for a, b in zip(lu, lt):
        if math.isinf(a) or math.isinf(b):
            continue
        d = a - b if directed else abs(a - b)
        if d > best:
            best = d
    return best


# ---------------------------------------------------------------------------
# Arc flags


def arc_count(net: RoadNetwork) -> int:
    return net.num_edges if net.directed else 2 * net.num_edges


def arc_index(net: RoadNetwork, eid: int, tail: int) -> int:
    """Arc id of edge ``eid`` leaving ``tail``; undirected edges have two arcs."""
    if net.directed:
        return eid
    return 2 * eid + (0 if net.edges[eid][0] == tail else 1)


def compute_arcflags(aug: AugmentedNetwork, tree: PackedKdTree) -> np.ndarray:
    """Boolean (arcs x regions) flag matrix over the original network's arcs.

    Flag ``R`` of an arc is set when the arc ends inside ``R`` or lies on the
    reverse shortest-path tree of one of ``R``'s border nodes.
    """
    base = aug.base if aug.base is not None else aug
    R = tree.num_regions
    flags = np.zeros((arc_count(base), R), dtype=bool)
    region = tree.region_of
    for eid, (u, v, _) in enumerate(base.edges):
        flags[arc_index(base, eid, u), region[v]] = True
        if not base.directed:
            flags[arc_index(base, eid, v), region[u]] = True
    if not aug.borders:
        return flags

    view = csr_view(aug)
    n = len(view.ids)
    rev = view.matrix.T.tocsr() if aug.directed else view.matrix
    arc_key = view.tails * n + view.heads
    aug_edge = view.edge_of
    host = np.asarray(aug.host_edge, dtype=np.int64)
    aug_tail = np.array([view.index[e[0]] for e in aug.edges], dtype=np.int64)

    src = np.array([view.index[b.node_id] for b in aug.borders], dtype=np.int64)
    src_reg = np.array([b.regions for b in aug.borders], dtype=np.int64)
    batch = max(1, min(256, 20_000_000 // max(1, n)))
    for start in range(0, len(src), batch):
        idx = src[start:start + batch]
        _, pred = sp_dijkstra(rev, directed=True, indices=idx, return_predecessors=True)
        b_, c_ = np.nonzero(pred >= 0)
        p_ = pred[b_, c_].astype(np.int64)
        # reverse-tree edge p <- c is the forward arc c -> p
        k = aug_edge[np.searchsorted(arc_key, c_ * n + p_)]
        e = host[k]
        if base.directed:
            arcs = e
        else:
            forward = aug_tail[k] == c_
            # an augmented sub-edge runs in its host's direction
            arcs = 2 * e + np.where(forward, 0, 1)
        for c in range(2):
            flags[arcs, src_reg[start:start + batch][b_, c]] = True
    return flags


# ---------------------------------------------------------------------------
# Covering checks (used by tests and as an optional build verification)


def region_nodes(tree: PackedKdTree) -> list[tuple[int, ...]]:
    return [leaf.members for leaf in tree.leaves]


def check_set_covering(net: RoadNetwork, tree: PackedKdTree, sets: Mapping[Key, Sequence[int]],
                       pairs: Iterable[tuple[int, int]], rel_tol: float = 1e-9) -> list[tuple]:
    """Pairs whose cost over R_s, R_t and S_{s,t} differs from the global cost."""
    members = region_nodes(tree)
    bad = []
    for s, t in pairs:
        i, j = tree.region_of[s], tree.region_of[t]
        extra = sets[canonical_key(i, j, net.directed)]
        allowed = set(members[i]) | set(members[j])
        for r in extra:
            allowed |= set(members[r])
        ref, got = dijkstra(net, s, t), dijkstra_restricted(net, allowed, s, t)
        if not _same_cost(ref, got, rel_tol):
            bad.append((s, t, None if ref is None else ref.cost, None if got is None else got.cost))
    return bad


def check_subgraph_covering(net: RoadNetwork, tree: PackedKdTree,
                            edges: Mapping[Key, Sequence[tuple[int, int, float]]],
                            pairs: Iterable[tuple[int, int]], rel_tol: float = 1e-9) -> list[tuple]:
    """Pairs whose cost over R_s, R_t edges plus G_{s,t} differs from the global cost."""
    from .graph import shortest_path

    members = region_nodes(tree)
    bad = []
    for s, t in pairs:
        i, j = tree.region_of[s], tree.region_of[t]
        adj: dict[int, list] = {}
        for r in {i, j}:
            for u in members[r]:
                adj.setdefault(u, []).extend(net.adjacency[u])
        for u, v, w in edges[canonical_key(i, j, net.directed)]:
            adj.setdefault(u, []).append((v, w))
            if not net.directed:
                adj.setdefault(v, []).append((u, w))
        ref, got = dijkstra(net, s, t), shortest_path(adj, s, t)
        if not _same_cost(ref, got, rel_tol):
            bad.append((s, t, None if ref is None else ref.cost, None if got is None else got.cost))
    return bad


def _same_cost(a, b, rel_tol: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(a.cost, b.cost, rel_tol=rel_tol, abs_tol=1e-12)
