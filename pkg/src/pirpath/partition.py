"""Packed KD-tree partitioning, point location and border-node extraction.

The tree is built on the byte stream of serialized node records so that
every region fits its page group and, apart from the last region, wastes at
most ``z`` bytes (``z`` being the largest node record).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .graph import RoadNetwork

X, Y = 0, 1

# Per-region page group header: u32 record count.
GROUP_HEADER = 4
# nodeId u32, x f64, y f64, degree u16
NODE_FIXED = 4 + 8 + 8 + 2
# targetNodeId u32, weight f64
ARC_FIXED = 4 + 8


class PartitionError(ValueError):
    pass


class CapacityError(PartitionError):
    """A single node record cannot fit in one page group."""


@dataclass(frozen=True)
class RecordLayout:
    """Byte layout of one node record in the region data file.

    ``extra_per_node`` carries scheme data stored once per node (landmark
    vectors), ``extra_per_arc`` data stored per adjacency entry (target
    region id and arc-flag bits).
    """

    extra_per_node: int = 0
    extra_per_arc: int = 0

    def size(self, degree: int) -> int:
        return NODE_FIXED + self.extra_per_node + degree * (ARC_FIXED + self.extra_per_arc)

    def sizes(self, net: RoadNetwork) -> dict[int, int]:
        return {v: self.size(len(net.adjacency[v])) for v in net.coords}


@dataclass(frozen=True)
class PartitionConfig:
    page_size: int
    max_record: int
    cluster_pages: int = 1

    def __post_init__(self):
        if self.cluster_pages < 1:
            raise ValueError("cluster_pages must be >= 1")
        if self.max_record > self.capacity:
            raise CapacityError(
                f"largest node record ({self.max_record} B) exceeds the page group "
                f"capacity ({self.capacity} B)"
            )

    @property
    def group_bytes(self) -> int:
        return self.cluster_pages * self.page_size

    @property
    def capacity(self) -> int:
        """Record bytes available per region."""
        return self.group_bytes - GROUP_HEADER

    @classmethod
    def for_network(cls, net: RoadNetwork, page_size: int, cluster_pages: int = 1,
                    layout: RecordLayout = RecordLayout()) -> "PartitionConfig":
        z = max(layout.sizes(net).values(), default=NODE_FIXED)
        return cls(page_size, z, cluster_pages)


@dataclass
class KdInternal:
    axis: int
    split: float
    left: "KdNode"
    right: "KdNode"


@dataclass
class KdLeaf:
    members: tuple[int, ...]
    rect: tuple[float, float, float, float]
    used_bytes: int = 0
    region: int = -1
    first_page: int = -1


KdNode = Union[KdInternal, KdLeaf]


@dataclass
class PackedKdTree:
    root: KdNode
    bounds: tuple[float, float, float, float]
    cluster_pages: int = 1
    fallbacks: int = 0
    leaves: list[KdLeaf] = field(init=False)
    region_of: dict[int, int] = field(init=False)

    def __post_init__(self):
        self.leaves = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, KdLeaf):
                node.region = len(self.leaves)
                node.first_page = node.region * self.cluster_pages
                self.leaves.append(node)
            else:
                stack.append(node.right)
                stack.append(node.left)
        self.region_of = {v: leaf.region for leaf in self.leaves for v in leaf.members}

    @property
    def num_regions(self) -> int:
        return len(self.leaves)

    def internal_nodes(self) -> list[KdInternal]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, KdInternal):
                out.append(node)
                stack.append(node.right)
                stack.append(node.left)
        return out

    def locate(self, p: Sequence[float]) -> int:
        return locate_region(self, p)


def packing_cut(total: int, capacity: int, z: int) -> tuple[int, int]:
    """Smallest ``i`` with ``2**i * (capacity - z)`` at or right of the middle byte.

    Returns ``(i, cut)``.
    """
    unit = capacity - z
    if unit <= 0:
        raise CapacityError("page group capacity must exceed the largest record")
    i = 0
    while (unit << i) * 2 < total:
        i += 1
    return i, unit << i


# ---------------------------------------------------------------------------
# Tree construction


class _Items:
    """Node records sorted along one axis, with valid (coordinate-changing) cuts."""

    def __init__(self, items: list, axis: int):
        self.axis = axis
        self.items = sorted(items, key=lambda it: (it[1 + axis], it[0]))
        sizes = np.fromiter((it[3] for it in self.items), dtype=np.int64, count=len(self.items))
        self.prefix = np.concatenate([[0], np.cumsum(sizes)])
        coord = np.fromiter((it[1 + axis] for it in self.items), dtype=np.float64, count=len(self.items))
        self.coord = coord
        # a cut after k records is geometric only if coordinates differ across it
        self.valid = np.nonzero(coord[1:] > coord[:-1])[0] + 1

    @property
    def total(self) -> int:
        return int(self.prefix[-1])

    def split_value(self, k: int) -> float:
        return float((self.coord[k - 1] + self.coord[k]) / 2.0)


def _leaf(items: list, rect) -> KdLeaf:
    return KdLeaf(tuple(sorted(it[0] for it in items)), rect, sum(it[3] for it in items))


def _split_rect(rect, axis, value):
    x0, y0, x1, y1 = rect
    if axis == X:
        return (x0, y0, value, y1), (value, y0, x1, y1)
    return (x0, y0, x1, value), (x0, value, x1, y1)


class _Builder:
    def __init__(self, capacity: int, z: int, tries: int = 3):
        self.cap = capacity
        self.z = z
        self.tries = tries
        self.fallbacks = 0

    # A subtree that must become exactly n leaves, each holding between
    # cap - z and cap bytes.  Returns None when no such split exists among
    # the cuts tried.
    def balanced(self, items: list, n: int, axis: int, rect) -> Optional[KdNode]:
        total = sum(it[3] for it in items)
        if not (n * (self.cap - self.z) <= total <= n * self.cap):
            return None
        if n == 1:
            return _leaf(items, rect)
        half = n // 2
        lo = max(half * (self.cap - self.z), total - half * self.cap)
        hi = min(half * self.cap, total - half * (self.cap - self.z))
        for ax in (axis, 1 - axis):
            srt = _Items(items, ax)
            cuts = srt.valid
            if not len(cuts):
                continue
            p = srt.prefix[cuts]
            ok = cuts[(p >= lo) & (p <= hi)]
            if not len(ok):
                continue
            dev = np.abs(2 * srt.prefix[ok] - total)
            for k in ok[np.lexsort((ok, dev))][: self.tries]:
                k = int(k)
                value = srt.split_value(k)
                lrect, rrect = _split_rect(rect, ax, value)
                left = self.balanced(srt.items[:k], half, 1 - ax, lrect)
                if left is None:
                    continue
                right = self.balanced(srt.items[k:], half, 1 - ax, rrect)
                if right is None:
                    continue
                return KdInternal(ax, value, left, right)
        return None

    # Halving without the slack requirement: any cut leaving each half
    # within its page capacity, nearest the middle byte first.
    def halve(self, items: list, n: int, axis: int, rect) -> Optional[KdNode]:
        total = sum(it[3] for it in items)
        if total > n * self.cap:
            return None
        if n == 1 or total <= self.cap:
            return _leaf(items, rect) if total <= self.cap else None
        half = n // 2
        for ax in (axis, 1 - axis):
            srt = _Items(items, ax)
            if not len(srt.valid):
                continue
            p = srt.prefix[srt.valid]
            ok = srt.valid[(p <= half * self.cap) & (total - p <= half * self.cap)]
            dev = np.abs(2 * srt.prefix[ok] - total)
            for k in ok[np.lexsort((ok, dev))][: self.tries]:
                k = int(k)
                value = srt.split_value(k)
                lrect, rrect = _split_rect(rect, ax, value)
                left = self.halve(srt.items[:k], half, 1 - ax, lrect)
                if left is None:
                    continue
                right = self.halve(srt.items[k:], half, 1 - ax, rrect)
                if right is None:
                    continue
                return KdInternal(ax, value, left, right)
        return None

    def pack(self, items: list, axis: int, rect) -> KdNode:
        total = sum(it[3] for it in items)
        if total <= self.cap:
            return _leaf(items, rect)
        i, cut = packing_cut(total, self.cap, self.z)
        n = 1 << i
        for ax in (axis, 1 - axis):
            srt = _Items(items, ax)
            # left part: the record holding byte `cut` and everything before
            # it; if that cannot be split into n full pages, try other cuts
            # inside the feasible band, nearest its centre first
            band = [int(k) for k in srt.valid if cut <= srt.prefix[k] <= n * self.cap]
            if srt.prefix[-1] <= n * self.cap:
                band.append(len(srt.items))
            if not band:
                continue
            centre = n * (2 * self.cap - self.z) / 2
            rest = sorted(band[1:], key=lambda k: (abs(srt.prefix[k] - centre), k))
            for k in [band[0]] + rest[: self.tries * 3]:
                node = self._packing_node(srt, k, n, ax, rect, self.balanced)
                if node is not None:
                    return node
        # Fewer full leaves on the left keep the guarantee at the price of
        # balance; one leaf always works unless coordinates tie.
        m = n >> 1
        while m >= 1:
            for ax in (axis, 1 - axis):
                srt = _Items(items, ax)
                band = [int(k) for k in srt.valid if m * (self.cap - self.z) <= srt.prefix[k] <= m * self.cap]
                centre = m * (2 * self.cap - self.z) / 2
                band.sort(key=lambda k: (abs(srt.prefix[k] - centre), k))
                for k in band[: self.tries * 3]:
                    node = self._packing_node(srt, k, m, ax, rect, self.balanced)
                    if node is not None:
                        return node
            m >>= 1
        # No cut gives every page at most z unused bytes; keep the formula's
        # cut and halve at the nearest record boundary (fit is guaranteed).
        self.fallbacks += 1
        for ax in (axis, 1 - axis):
            srt = _Items(items, ax)
            cuts = [int(k) for k in srt.valid if srt.prefix[k] <= n * self.cap]
            if srt.prefix[-1] <= n * self.cap:
                cuts.append(len(srt.items))
            cuts.sort(key=lambda k: (srt.prefix[k] < cut, abs(srt.prefix[k] - cut), k))
            for k in cuts[: self.tries * 3]:
                node = self._packing_node(srt, k, n, ax, rect, self.halve)
                if node is not None:
                    return node
        raise PartitionError(f"cannot split {len(items)} co-located node records into pages")

    def _packing_node(self, srt: _Items, k: int, n: int, ax: int, rect, method):
        if k == len(srt.items):
            return method(srt.items, n, ax, rect)
        value = srt.split_value(k)
        lrect, rrect = _split_rect(rect, ax, value)
        left = method(srt.items[:k], n, 1 - ax, lrect)
        if left is None:
            return None
        right = self.pack(srt.items[k:], 1 - ax, rrect)
        return KdInternal(ax, value, left, right)


def build_packed_kdtree(net: RoadNetwork, cfg: PartitionConfig,
                        layout: RecordLayout = RecordLayout()) -> PackedKdTree:
    """Partition ``net`` into regions whose records fill ``cfg.capacity`` bytes."""
    sizes = layout.sizes(net)
    for v, size in sizes.items():
        if size > cfg.capacity:
            raise CapacityError(f"node {v} record ({size} B) exceeds page group capacity {cfg.capacity} B")
    z = max(cfg.max_record, max(sizes.values(), default=0))
    items = [(v, x, y, sizes[v]) for v, (x, y) in net.coords.items()]
    bounds = net.bounds() if items else (0.0, 0.0, 0.0, 0.0)
    builder = _Builder(cfg.capacity, z)
    root = builder.pack(items, X, bounds) if items else KdLeaf((), bounds)
    return PackedKdTree(root, bounds, cfg.cluster_pages, fallbacks=builder.fallbacks)


def kdtree_from_splits(net: RoadNetwork, splits, cluster_pages: int = 1,
                       layout: RecordLayout = RecordLayout()) -> PackedKdTree:
    """Tree from an explicit nested split description.

    ``splits`` is ``None`` for a leaf or ``(axis, value, left, right)``.
    Points with coordinate >= value go right.  Used for hand-made fixtures.
    """
    sizes = layout.sizes(net)

    def build(items, spec, rect):
        if spec is None:
            return _leaf(items, rect)
        axis, value, lspec, rspec = spec
        left = [it for it in items if it[1 + axis] < value]
        right = [it for it in items if it[1 + axis] >= value]
        lrect, rrect = _split_rect(rect, axis, value)
        return KdInternal(axis, float(value), build(left, lspec, lrect), build(right, rspec, rrect))

    items = [(v, x, y, sizes[v]) for v, (x, y) in net.coords.items()]
    bounds = net.bounds()
    return PackedKdTree(build(items, splits, bounds), bounds, cluster_pages)


def leaf_slack(tree: PackedKdTree, cfg: PartitionConfig) -> list[int]:
    """Unused record bytes per region, in region order."""
    return [cfg.capacity - leaf.used_bytes for leaf in tree.leaves]


# ---------------------------------------------------------------------------
# Point location


class OutOfBoundsError(ValueError):
    pass


def locate_region(tree: PackedKdTree, p: Sequence[float]) -> int:
    """Region whose rectangle contains ``p``; split lines belong to the greater side."""
    x0, y0, x1, y1 = tree.bounds
    x, y = float(p[0]), float(p[1])
    if not (x0 <= x <= x1 and y0 <= y <= y1):
        raise OutOfBoundsError(f"point ({x}, {y}) outside the network bounds {tree.bounds}")
    node = tree.root
    while isinstance(node, KdInternal):
        node = node.right if (x, y)[node.axis] >= node.split else node.left
    return node.region


# ---------------------------------------------------------------------------
# Border nodes


@dataclass(frozen=True)
class BorderNode:
    node_id: int
    host_edge: int
    position: tuple[float, float]
    regions: tuple[int, ...]


@dataclass
class AugmentedNetwork(RoadNetwork):
    """Network with border nodes spliced into region-crossing edges.

    ``host_edge[k]`` is the original edge id of augmented edge ``k``.
    """

    host_edge: list[int] = field(default_factory=list)
    borders: list[BorderNode] = field(default_factory=list)
    real_nodes: frozenset = frozenset()
    base: Optional[RoadNetwork] = field(default=None, repr=False)


def _crossings(tree: PackedKdTree, lines_xy, pu, pv, ru: int, rv: int):
    """Leaf transitions along the segment pu -> pv as (t, regions) pairs."""
    xs, ys = lines_xy
    ts = [0.0, 1.0]
    for lines, a in ((xs, 0), (ys, 1)):
        d = pv[a] - pu[a]
        if d == 0 or not len(lines):
            continue
        t = (lines - pu[a]) / d
        ts.extend(t[(t >= 0.0) & (t <= 1.0)].tolist())
    ts = sorted(set(ts))
    seq = [ru]
    for a, b in zip(ts[:-1], ts[1:]):
        m = (a + b) / 2.0
        seq.append(locate_region(tree, (pu[0] + m * (pv[0] - pu[0]), pu[1] + m * (pv[1] - pu[1]))))
    seq.append(rv)
    # seq[k] and seq[k+1] meet at ts[k] (k = 0 .. len(ts) - 1)
    out = []
    for k, t in enumerate(ts):
        if seq[k] != seq[k + 1]:
            out.append((t, tuple(sorted({seq[k], seq[k + 1]}))))
    return out


def extract_border_nodes(net: RoadNetwork, tree: PackedKdTree) -> tuple[AugmentedNetwork, list[BorderNode]]:
    """Split every edge where it crosses a region boundary.

    Sub-edge weights are the host weight apportioned by Euclidean length.
    Border node ids start after the largest real node id.
    """
    region = tree.region_of
    next_id = max(net.coords, default=-1) + 1
    coords = dict(net.coords)
    edges: list[tuple[int, int, float]] = []
    host: list[int] = []
    borders: list[BorderNode] = []
    inner = tree.internal_nodes()
    lines_xy = (np.array([n.split for n in inner if n.axis == X]),
                np.array([n.split for n in inner if n.axis == Y]))
    for eid, (u, v, w) in enumerate(net.edges):
        ru, rv = region[u], region[v]
        if ru == rv:
            edges.append((u, v, w))
            host.append(eid)
            continue
        pu, pv = net.coords[u], net.coords[v]
        chain = [(0.0, u)]
        for t, regs in _crossings(tree, lines_xy, pu, pv, ru, rv):
            pos = (pu[0] + t * (pv[0] - pu[0]), pu[1] + t * (pv[1] - pu[1]))
            b = BorderNode(next_id, eid, pos, regs)
            borders.append(b)
            coords[next_id] = pos
            chain.append((t, next_id))
            next_id += 1
        chain.append((1.0, v))
        for (ta, a), (tb, b) in zip(chain[:-1], chain[1:]):
            edges.append((a, b, w * (tb - ta)))
            host.append(eid)
    aug = AugmentedNetwork(
        coords, edges, directed=net.directed, allow_zero_weights=True,
        host_edge=host, borders=borders, real_nodes=frozenset(net.coords), base=net,
    )
    return aug, borders


def borders_by_region(borders: Sequence[BorderNode], num_regions: int) -> list[list[int]]:
    out: list[list[int]] = [[] for _ in range(num_regions)]
    for b in borders:
        for r in b.regions:
            out[r].append(b.node_id)
    return out
