"""Fixed-size-page files: header, look-up, network index and region data.

All integers are little-endian; ids and page numbers are u32, coordinates
and weights f64.

Region data file (``Fd``): one group of ``cluster_pages`` pages per region,
in region order.  A group starts with a u32 record count followed by node
records::

    u32 nodeId, f64 x, f64 y, u16 degree, [f64 landmark] * anchors,
    degree * (u32 target, f64 weight, [u32 targetRegion], [flag bytes])

Network index file (``Fi``): every page starts with a slot directory
``u16 count, count * (u32 keyRank, u16 offset)``.  An entry is::

    u8 kind (bit0 subgraph, bit1 has reference), [u16 refSlot],
    u32 nAdd, additions, [u32 nExcl, exclusions]      (exclusions: sets only)

Set members are u32 region ids; subgraph edges are ``(u32, u32, f64)``.
An entry that does not fit one page starts a fresh page and runs on into
as many pages as needed; nothing else shares those pages.

Look-up file (``Fl``): one u32 ``Fi`` page per key rank, packed densely.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .graph import RoadNetwork
from .partition import KdInternal, KdLeaf, PackedKdTree, RecordLayout, X
from .precompute import Key, PassageSubgraph, Payload, RegionSet

FILE_CODES = {"Fh": 0, "Fl": 1, "Fi": 2, "Fd": 3, "FiFd": 4}
FILE_NAMES = {v: k for k, v in FILE_CODES.items()}
SCHEME_CODES = {"CI": 1, "PI": 2, "HY": 3, "PI*": 4, "LM": 5, "AF": 6}
SCHEME_NAMES = {v: k for k, v in SCHEME_CODES.items()}

MAGIC = b"PIRSP\x00"
VERSION = 1

KIND_SUBGRAPH = 1
KIND_REF = 2
SLOT_HEADER = 2
SLOT_ENTRY = 6
LOOKUP_WIDTH = 4

_NODE = struct.Struct("<IddH")
_ARC = struct.Struct("<Id")
_EDGE = struct.Struct("<IId")


class StorageError(ValueError):
    pass


class DecodeError(StorageError):
    pass


@dataclass
class PagedFile:
    file_id: str
    page_size: int
    data: bytes

    def __post_init__(self):
        if len(self.data) % self.page_size:
            raise StorageError(f"{self.file_id}: size {len(self.data)} is not a whole number of pages")

    @classmethod
    def from_pages(cls, file_id: str, page_size: int, pages: Iterable[bytes]) -> "PagedFile":
        out = bytearray()
        for p in pages:
            if len(p) > page_size:
                raise StorageError(f"{file_id}: page of {len(p)} bytes exceeds page size")
            out += p + bytes(page_size - len(p))
        return cls(file_id, page_size, bytes(out))

    @classmethod
    def from_blob(cls, file_id: str, page_size: int, blob: bytes) -> "PagedFile":
        pad = (-len(blob)) % page_size
        if not blob:
            pad = page_size
        return cls(file_id, page_size, bytes(blob) + bytes(pad))

    @property
    def page_count(self) -> int:
        return len(self.data) // self.page_size

    @property
    def size_bytes(self) -> int:
        return len(self.data)

    def page(self, index: int) -> bytes:
        if not 0 <= index < self.page_count:
            raise IndexError(f"{self.file_id}: page {index} out of range 0..{self.page_count - 1}")
        return self.data[index * self.page_size:(index + 1) * self.page_size]

    def pages(self, start: int, count: int) -> bytes:
        return b"".join(self.page(i) for i in range(start, start + count))


# ---------------------------------------------------------------------------
# Region data file


@dataclass(frozen=True)
class RecordFormat:
    anchors: int = 0
    arc_region: bool = False
    flag_bytes: int = 0

    @property
    def layout(self) -> RecordLayout:
        return RecordLayout(8 * self.anchors, (4 if self.arc_region else 0) + self.flag_bytes)


@dataclass
class NodeRecord:
    node_id: int
    x: float
    y: float
    arcs: list  # (target, weight, targetRegion or -1, flag bytes)
    landmarks: tuple = ()


def encode_node_record(rec: NodeRecord, fmt: RecordFormat) -> bytes:
    out = bytearray(_NODE.pack(rec.node_id, rec.x, rec.y, len(rec.arcs)))
    if fmt.anchors:
        if len(rec.landmarks) != fmt.anchors:
            raise StorageError(f"node {rec.node_id}: expected {fmt.anchors} landmark costs")
        out += struct.pack(f"<{fmt.anchors}d", *rec.landmarks)
    for target, w, region, flags in rec.arcs:
        out += _ARC.pack(target, w)
        if fmt.arc_region:
            out += struct.pack("<I", region)
        if fmt.flag_bytes:
            if len(flags) != fmt.flag_bytes:
                raise StorageError(f"node {rec.node_id}: bad flag width")
            out += flags
    return bytes(out)


def decode_region_group(blob: bytes, fmt: RecordFormat) -> list[NodeRecord]:
    (count,) = struct.unpack_from("<I", blob, 0)
    pos = 4
    out = []
    lm = struct.Struct(f"<{fmt.anchors}d") if fmt.anchors else None
    for _ in range(count):
        nid, x, y, deg = _NODE.unpack_from(blob, pos)
        pos += _NODE.size
        marks: tuple = ()
        if lm is not None:
            marks = lm.unpack_from(blob, pos)
            pos += lm.size
        arcs = []
        for _ in range(deg):
            target, w = _ARC.unpack_from(blob, pos)
            pos += _ARC.size
            region = -1
            if fmt.arc_region:
                (region,) = struct.unpack_from("<I", blob, pos)
                pos += 4
            flags = b""
            if fmt.flag_bytes:
                flags = blob[pos:pos + fmt.flag_bytes]
                pos += fmt.flag_bytes
            arcs.append((target, w, region, flags))
        out.append(NodeRecord(nid, x, y, arcs, marks))
    return out


def node_records(net: RoadNetwork, tree: PackedKdTree, fmt: RecordFormat = RecordFormat(),
                 landmarks: Optional[dict] = None, flags: Optional[np.ndarray] = None) -> dict[int, NodeRecord]:
    """Records for every node; ``flags`` is an (arcs x regions) boolean matrix."""
    from .precompute import arc_index

    packed = None
    if fmt.flag_bytes:
        packed = np.packbits(flags, axis=1, bitorder="little")
        if packed.shape[1] > fmt.flag_bytes:
            raise StorageError("flag matrix wider than the record format")
        packed = np.pad(packed, ((0, 0), (0, fmt.flag_bytes - packed.shape[1])))
    out = {}
    for v, (x, y) in net.coords.items():
        arcs = []
        for target, w, eid in net.adjacency[v]:
            region = tree.region_of[target] if fmt.arc_region else -1
            fb = bytes(packed[arc_index(net, eid, v)]) if packed is not None else b""
            arcs.append((target, w, region, fb))
        marks = tuple(landmarks[v]) if fmt.anchors else ()
        out[v] = NodeRecord(v, x, y, arcs, marks)
    return out


def build_region_data_file(tree: PackedKdTree, net: RoadNetwork, page_size: int,
                           fmt: RecordFormat = RecordFormat(), landmarks=None, flags=None) -> PagedFile:
    """One page group per region, records in node-id order."""
    group = tree.cluster_pages * page_size
    recs = node_records(net, tree, fmt, landmarks, flags)
    out = bytearray()
    for leaf in tree.leaves:
        body = bytearray(struct.pack("<I", len(leaf.members)))
        for v in leaf.members:
            body += encode_node_record(recs[v], fmt)
        if len(body) > group:
            raise StorageError(f"region {leaf.region}: {len(body)} bytes overflow its {group}-byte page group")
        out += body + bytes(group - len(body))
    return PagedFile("Fd", page_size, bytes(out))


def group_slack(fd: PagedFile, cluster_pages: int, fmt: RecordFormat) -> list[int]:
    """Unused bytes per page group, measured from the stored bytes."""
    group = cluster_pages * fd.page_size
    out = []
    for g in range(fd.page_count // cluster_pages):
        blob = fd.data[g * group:(g + 1) * group]
        used = 4 + sum(len(encode_node_record(r, fmt)) for r in decode_region_group(blob, fmt))
        out.append(group - used)
    return out


# ---------------------------------------------------------------------------
# Index entries and delta compression


@dataclass(frozen=True)
class DeltaRecord:
    """A set or subgraph stored as a difference to an earlier entry of its page.

    ``reference`` is the in-page slot ordinal, or ``None``.
    """

    subgraph: bool
    reference: Optional[int]
    additions: tuple
    exclusions: tuple = ()

    def encode(self) -> bytes:
        kind = (KIND_SUBGRAPH if self.subgraph else 0) | (KIND_REF if self.reference is not None else 0)
        out = bytearray([kind])
        if self.reference is not None:
            out += struct.pack("<H", self.reference)
        out += struct.pack("<I", len(self.additions))
        if self.subgraph:
            for u, v, w in self.additions:
                out += _EDGE.pack(u, v, w)
        else:
            out += struct.pack(f"<{len(self.additions)}I", *self.additions)
            out += struct.pack("<I", len(self.exclusions))
            out += struct.pack(f"<{len(self.exclusions)}I", *self.exclusions)
        return bytes(out)

    @classmethod
    def decode(cls, blob: bytes, pos: int = 0) -> "DeltaRecord":
        try:
            kind = blob[pos]
            pos += 1
            ref = None
            if kind & KIND_REF:
                (ref,) = struct.unpack_from("<H", blob, pos)
                pos += 2
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            if kind & KIND_SUBGRAPH:
                adds = tuple(_EDGE.unpack_from(blob, pos + 16 * k) for k in range(n))
                return cls(True, ref, adds)
            adds = struct.unpack_from(f"<{n}I", blob, pos)
            pos += 4 * n
            (ne,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            excl = struct.unpack_from(f"<{ne}I", blob, pos)
            return cls(False, ref, tuple(adds), tuple(excl))
        except (IndexError, struct.error) as exc:
            raise DecodeError(f"truncated index entry: {exc}") from None

    @property
    def size(self) -> int:
        head = 1 + (2 if self.reference is not None else 0) + 4
        if self.subgraph:
            return head + 16 * len(self.additions)
        return head + 4 * len(self.additions) + 4 + 4 * len(self.exclusions)


def raw_record(payload: Payload) -> DeltaRecord:
    if isinstance(payload, PassageSubgraph):
        return DeltaRecord(True, None, tuple(payload.edges))
    return DeltaRecord(False, None, tuple(payload.members))


def compress_set_delta(entry: Sequence[int], candidates: Sequence[Iterable[int]], m: int) -> DeltaRecord:
    """Delta of a region set against the candidate with the largest overlap.

    ``candidates[k]`` is the decoded content of in-page slot ``k``.  If the
    reference plus the additions would exceed ``m`` regions, the smallest
    reference-only ids are excluded until the bound holds.
    """
    entry_set = set(entry)
    if not candidates:
        return DeltaRecord(False, None, tuple(sorted(entry_set)))
    best, best_overlap = 0, -1
    for k, cand in enumerate(candidates):
        ov = len(entry_set & set(cand))
        if ov > best_overlap:
            best, best_overlap = k, ov
    ref = set(candidates[best])
    adds = sorted(entry_set - ref)
    over = len(ref) + len(adds) - m
    excl = sorted(ref - entry_set)[:max(0, over)]
    return DeltaRecord(False, best, tuple(adds), tuple(excl))


def compress_subgraph_delta(entry: Sequence[tuple], candidates: Sequence[Iterable[tuple]]) -> DeltaRecord:
    """Edges missing from the best-overlapping candidate; no exclusions."""
    entry_set = set(entry)
    if not candidates:
        return DeltaRecord(True, None, tuple(sorted(entry_set)))
    best, best_overlap = 0, -1
    for k, cand in enumerate(candidates):
        ov = len(entry_set & set(cand))
        if ov > best_overlap:
            best, best_overlap = k, ov
    return DeltaRecord(True, best, tuple(sorted(entry_set - set(candidates[best]))))


def inflate(rec: DeltaRecord, reference: Optional[frozenset]) -> frozenset:
    if rec.reference is None:
        return frozenset(rec.additions)
    if reference is None:
        raise DecodeError("entry references a slot that was not supplied")
    if rec.subgraph:
        return reference | frozenset(rec.additions)
    return (reference | frozenset(rec.additions)) - frozenset(rec.exclusions)


def page_directory(page: bytes) -> list[tuple[int, int]]:
    """``[(keyRank, offset), ...]`` of one index page."""
    (count,) = struct.unpack_from("<H", page, 0)
    if SLOT_HEADER + SLOT_ENTRY * count > len(page):
        raise DecodeError(f"slot directory of {count} entries overruns the page")
    return [struct.unpack_from("<IH", page, SLOT_HEADER + SLOT_ENTRY * k) for k in range(count)]


def decompress_entry(blob: bytes, slot: int, _seen: Optional[set] = None):
    """Inflate slot ``slot`` of the index page starting ``blob``.

    ``blob`` may hold several pages when the entry spans them.  Returns
    ``(kind, content)`` where ``kind`` is ``"set"`` or ``"subgraph"``.
    """
    seen = set() if _seen is None else _seen
    if slot in seen:
        raise DecodeError(f"reference cycle at slot {slot}")
    seen.add(slot)
    directory = page_directory(blob)
    if not 0 <= slot < len(directory):
        raise DecodeError(f"slot {slot} not in page (has {len(directory)})")
    rec = DeltaRecord.decode(blob, directory[slot][1])
    ref = None
    if rec.reference is not None:
        if rec.reference >= slot:
            raise DecodeError(f"slot {slot} references later slot {rec.reference}")
        kind, ref = decompress_entry(blob, rec.reference, seen)
        if (kind == "subgraph") != rec.subgraph:
            raise DecodeError("reference of a different entry kind")
    return ("subgraph" if rec.subgraph else "set"), inflate(rec, ref)


def find_slot(page: bytes, key_rank: int) -> int:
    for k, (rank, _) in enumerate(page_directory(page)):
        if rank == key_rank:
            return k
    raise DecodeError(f"key rank {key_rank} not in page")


@dataclass
class IndexLayout:
    file: PagedFile
    placement: dict  # key -> (first page, span, slot)
    raw_bytes: int = 0

    def span(self, key) -> int:
        return self.placement[key][1]


class _Page:
    def __init__(self, page_size):
        self.page_size = page_size
        self.entries: list[tuple[int, bytes]] = []
        self.content: list[tuple[bool, frozenset]] = []

    def used(self) -> int:
        return SLOT_HEADER + sum(SLOT_ENTRY + len(b) for _, b in self.entries)

    def fits(self, size: int) -> bool:
        return self.used() + SLOT_ENTRY + size <= self.page_size

    def render(self) -> bytes:
        out = bytearray(struct.pack("<H", len(self.entries)))
        offset = SLOT_HEADER + SLOT_ENTRY * len(self.entries)
        for rank, blob in self.entries:
            out += struct.pack("<IH", rank, offset)
            offset += len(blob)
        for _, blob in self.entries:
            out += blob
        return bytes(out)


def key_rank(i: int, j: int, num_regions: int, directed: bool) -> int:
    if directed:
        return i * num_regions + j
    if i > j:
        i, j = j, i
    return i * num_regions - i * (i - 1) // 2 + (j - i)


def build_network_index_file(payloads: Sequence[tuple[Key, Payload]], page_size: int, num_regions: int,
                             directed: bool, compression: bool = True, m: Optional[int] = None,
                             file_id: str = "Fi", max_entry_bytes: Optional[int] = None) -> IndexLayout:
    """Next-fit packing of index entries in key order.

    With ``compression`` each entry may be stored relative to an earlier
    entry of the same page, and is only when that makes it smaller.
    """
    if m is None:
        m = max((len(p) for _, p in payloads if isinstance(p, RegionSet)), default=0)
    pages: list[bytes] = []
    placement = {}
    cur = _Page(page_size)
    raw_total = 0

    def flush():
        nonlocal cur
        if cur.entries:
            pages.append(cur.render())
        cur = _Page(page_size)

    for key, payload in payloads:
        raw = raw_record(payload)
        raw_blob = raw.encode()
        raw_total += len(raw_blob)
        if max_entry_bytes is not None and len(raw_blob) > max_entry_bytes:
            raise StorageError(f"index entry {key} of {len(raw_blob)} bytes exceeds the file size cap")
        rank = key_rank(key[0], key[1], num_regions, directed)
        is_sub = raw.subgraph
        rec = raw
        if compression and cur.entries:
            rec = _best_delta(payload, cur, m)
            if rec is None or rec.size >= raw.size:
                rec = raw
        blob = rec.encode()
        if not cur.fits(len(blob)):
            flush()
            rec, blob = raw, raw_blob
        if not cur.fits(len(blob)):
            # multi-page entry: fresh pages, nothing else shares them
            first = len(pages)
            single = _Page(page_size)
            single.entries.append((rank, blob))
            body = single.render()
            span = math.ceil(len(body) / page_size)
            for k in range(span):
                pages.append(body[k * page_size:(k + 1) * page_size])
            placement[key] = (first, span, 0)
            continue
        slot = len(cur.entries)
        ref = cur.content[rec.reference][1] if rec.reference is not None else None
        cur.entries.append((rank, blob))
        cur.content.append((is_sub, inflate(rec, ref)))
        placement[key] = (len(pages), 1, slot)
    flush()
    if not pages:
        pages.append(_Page(page_size).render())
    return IndexLayout(PagedFile.from_pages(file_id, page_size, pages), placement, raw_total)


def _best_delta(payload: Payload, page: _Page, m: int) -> Optional[DeltaRecord]:
    is_sub = isinstance(payload, PassageSubgraph)
    # references must be of the same kind; slots of the other kind are
    # offered as empty so ordinals still line up
    cands = [c if s == is_sub else None for s, c in page.content]
    usable = [k for k, c in enumerate(cands) if c is not None]
    if not usable:
        return None
    sub_cands = [cands[k] for k in usable]
    if is_sub:
        rec = compress_subgraph_delta(payload.edges, sub_cands)
    else:
        rec = compress_set_delta(payload.members, sub_cands, m)
    return DeltaRecord(rec.subgraph, usable[rec.reference] if rec.reference is not None else None,
                       rec.additions, rec.exclusions)


def read_index_entry(blob: bytes, key_rank_: int):
    """Decode the entry for ``key_rank_``; ``blob`` starts at the entry's first page."""
    return decompress_entry(blob, find_slot(blob, key_rank_))


def entry_span(page: bytes, key_rank_: int, page_size: int) -> int:
    """Pages covered by the entry, read from its first page only."""
    directory = page_directory(page)
    slot = find_slot(page, key_rank_)
    if len(directory) > 1:
        return 1
    off = directory[slot][1]
    kind = page[off]
    pos = off + 1 + (2 if kind & KIND_REF else 0)
    (n,) = struct.unpack_from("<I", page, pos)
    # entries spilling past one page are always self-contained, so a set
    # has no exclusions beyond its zero count
    end = pos + 4 + (16 * n if kind & KIND_SUBGRAPH else 4 * n + 4)
    return max(1, math.ceil(end / page_size))


# ---------------------------------------------------------------------------
# Look-up file


def build_lookup_file(first_pages: Sequence[int], page_size: int) -> PagedFile:
    """Dense array of u32 index pages, position = key rank."""
    blob = struct.pack(f"<{len(first_pages)}I", *first_pages)
    return PagedFile.from_blob("Fl", page_size, blob)


def lookup_position(rank: int, page_size: int) -> tuple[int, int]:
    """(page, byte offset) of look-up entry ``rank``."""
    per_page = page_size // LOOKUP_WIDTH
    return rank // per_page, (rank % per_page) * LOOKUP_WIDTH


def read_lookup(page: bytes, offset: int) -> int:
    return struct.unpack_from("<I", page, offset)[0]


# ---------------------------------------------------------------------------
# Combined index + region file (HY)


def build_combined_file(fi: PagedFile, fd: PagedFile) -> PagedFile:
    if fi.page_size != fd.page_size:
        raise StorageError("page sizes differ")
    return PagedFile("FiFd", fi.page_size, fi.data + fd.data)


# ---------------------------------------------------------------------------
# Header


@dataclass
class Header:
    scheme: str
    directed: bool
    page_size: int
    cluster_pages: int
    bounds: tuple
    root: object  # KdInternal / KdLeaf tree without members
    first_pages: list  # per region
    plan: list  # rounds of (file id, count)
    m: int = 0
    h: int = 0
    r: int = 0
    max_span: int = 0
    fixed_max: int = 0
    files: dict = field(default_factory=dict)  # id -> (page count, entry width)
    index_pages: int = 0  # Fi section length inside FiFd
    record: RecordFormat = RecordFormat()

    @property
    def num_regions(self) -> int:
        return len(self.first_pages)

    def locate(self, p) -> int:
        x0, y0, x1, y1 = self.bounds
        x, y = float(p[0]), float(p[1])
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            from .partition import OutOfBoundsError

            raise OutOfBoundsError(f"point ({x}, {y}) outside the network bounds {self.bounds}")
        node = self.root
        while isinstance(node, KdInternal):
            node = node.right if (x, y)[node.axis] >= node.split else node.left
        return node.region


def _tree_bytes(root) -> bytes:
    out = bytearray()
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, KdLeaf):
            out.append(0)
        else:
            out += struct.pack("<Bd", 1 if node.axis == X else 2, node.split)
            stack.append(node.right)
            stack.append(node.left)
    return bytes(out)


def _parse_tree(blob: bytes, pos: int):
    counter = [0]

    def rec(pos):
        tag = blob[pos]
        if tag == 0:
            leaf = KdLeaf((), (0, 0, 0, 0), region=counter[0])
            counter[0] += 1
            return leaf, pos + 1
        if tag not in (1, 2):
            raise DecodeError(f"bad tree tag {tag}")
        (split,) = struct.unpack_from("<d", blob, pos + 1)
        left, pos = rec(pos + 9)
        right, pos = rec(pos)
        return KdInternal(0 if tag == 1 else 1, split, left, right), pos

    return rec(pos)


def build_header(hdr: Header) -> PagedFile:
    """Serialise ``hdr``; the round-1 entry of the plan is set to the header's own page count."""
    blob = _header_bytes(hdr)
    pages = max(1, math.ceil(len(blob) / hdr.page_size))
    if hdr.plan and hdr.plan[0] and hdr.plan[0][0][0] == "Fh":
        hdr.plan[0] = [("Fh", pages)]
        hdr.files["Fh"] = (pages, 0)
        blob = _header_bytes(hdr)
    return PagedFile.from_blob("Fh", hdr.page_size, blob)


def _header_bytes(hdr: Header) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<HBBII", VERSION, SCHEME_CODES[hdr.scheme], int(hdr.directed),
                       hdr.page_size, hdr.cluster_pages)
    out += struct.pack("<5I", hdr.m, hdr.h, hdr.r, hdr.max_span, hdr.fixed_max)
    out += struct.pack("<H", len(hdr.plan))
    for rnd in hdr.plan:
        out += struct.pack("<B", len(rnd))
        for fid, count in rnd:
            out += struct.pack("<BI", FILE_CODES[fid], count)
    out += struct.pack("<B", len(hdr.files))
    for fid in sorted(hdr.files, key=FILE_CODES.get):
        count, width = hdr.files[fid]
        out += struct.pack("<BIH", FILE_CODES[fid], count, width)
    out += struct.pack("<I", hdr.index_pages)
    fmt = hdr.record
    out += struct.pack("<HBH", fmt.anchors, int(fmt.arc_region), fmt.flag_bytes)
    out += struct.pack("<4d", *hdr.bounds)
    out += _tree_bytes(hdr.root)
    out += struct.pack("<I", len(hdr.first_pages))
    for region, first in enumerate(hdr.first_pages):
        out += struct.pack("<II", region, first)
    return bytes(out)


def parse_header(blob: bytes) -> Header:
    if not blob.startswith(MAGIC):
        raise DecodeError("not a header file (bad magic)")
    try:
        pos = len(MAGIC)
        version, scheme, directed, page_size, cluster = struct.unpack_from("<HBBII", blob, pos)
        if version != VERSION:
            raise DecodeError(f"unsupported header version {version}")
        pos += 12
        m, h, r, max_span, fixed_max = struct.unpack_from("<5I", blob, pos)
        pos += 20
        (nrounds,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        plan = []
        for _ in range(nrounds):
            (nseg,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            rnd = []
            for _ in range(nseg):
                code, count = struct.unpack_from("<BI", blob, pos)
                pos += 5
                rnd.append((FILE_NAMES[code], count))
            plan.append(rnd)
        (nfiles,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        files = {}
        for _ in range(nfiles):
            code, count, width = struct.unpack_from("<BIH", blob, pos)
            pos += 7
            files[FILE_NAMES[code]] = (count, width)
        (index_pages,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        anchors, arc_region, flag_bytes = struct.unpack_from("<HBH", blob, pos)
        pos += 5
        bounds = struct.unpack_from("<4d", blob, pos)
        pos += 32
        root, pos = _parse_tree(blob, pos)
        (R,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        first_pages = [0] * R
        for _ in range(R):
            region, first = struct.unpack_from("<II", blob, pos)
            pos += 8
            first_pages[region] = first
    except (struct.error, IndexError, KeyError) as exc:
        raise DecodeError(f"corrupt header: {exc}") from None
    return Header(SCHEME_NAMES[scheme], bool(directed), page_size, cluster, tuple(bounds), root,
                  first_pages, plan, m, h, r, max_span, fixed_max, files, index_pages,
                  RecordFormat(anchors, bool(arc_region), flag_bytes))


# ---------------------------------------------------------------------------
# Text dumps


def describe_file(f: PagedFile, header: Optional[Header] = None, limit: int = 20) -> str:
    """Human-readable structure of any database file."""
    lines = [f"file {f.file_id}: {f.page_count} pages of {f.page_size} bytes ({f.size_bytes} bytes)"]
    if f.file_id == "Fh":
        h = parse_header(f.data)
        lines += [
            f"scheme {h.scheme} directed={h.directed} cluster_pages={h.cluster_pages}",
            f"m={h.m} h={h.h} r={h.r} max_span={h.max_span} fixed_max={h.fixed_max}",
            f"regions {h.num_regions} bounds {h.bounds}",
            "plan " + " | ".join(",".join(f"{fid}x{c}" for fid, c in rnd) for rnd in h.plan),
        ]
        lines += [f"  {fid}: {c} pages, entry width {w}" for fid, (c, w) in sorted(h.files.items())]
        if h.record.anchors or h.record.arc_region:
            lines.append(f"records anchors={h.record.anchors} arc_region={h.record.arc_region} "
                         f"flag_bytes={h.record.flag_bytes}")
        return "\n".join(lines)
    if f.file_id == "Fl":
        n = f.size_bytes // LOOKUP_WIDTH
        vals = struct.unpack_from(f"<{min(n, limit)}I", f.data, 0)
        lines.append(f"{f.page_size // LOOKUP_WIDTH} entries per page; first targets {list(vals)}")
        return "\n".join(lines)
    if f.file_id in ("Fi", "FiFd"):
        end = header.index_pages if (header is not None and f.file_id == "FiFd") else f.page_count
        shown = 0
        for p in range(end):
            if shown >= limit:
                lines.append("  ...")
                break
            page = f.page(p)
            try:
                directory = page_directory(page)
            except DecodeError:
                continue
            if not directory or (len(directory) == 1 and directory[0][1] != SLOT_HEADER + SLOT_ENTRY):
                continue
            kinds = []
            for slot, (rank, off) in enumerate(directory):
                k = page[off]
                kinds.append(f"{rank}:{'G' if k & KIND_SUBGRAPH else 'S'}{'+ref' if k & KIND_REF else ''}")
            lines.append(f"  page {p}: {len(directory)} entries [{' '.join(kinds)}]")
            shown += 1
        if f.file_id == "FiFd" and header is not None:
            lines.append(f"  region pages start at {header.index_pages}")
        return "\n".join(lines)
    if f.file_id == "Fd" and header is not None:
        k = header.cluster_pages
        for g in range(min(f.page_count // k, limit)):
            recs = decode_region_group(f.pages(g * k, k), header.record)
            lines.append(f"  region {g}: {len(recs)} nodes")
        return "\n".join(lines)
    return "\n".join(lines)
