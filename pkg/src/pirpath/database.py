"""Building, saving and loading the per-scheme databases."""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional


from .engine import QueryPlan, af_search, derive_query_plan, lm_search
from .graph import RoadNetwork
from .partition import (
    PackedKdTree,
    PartitionConfig,
    build_packed_kdtree,
    extract_border_nodes,
    leaf_slack,
)
from .pir import CapacityExceeded, CostModel, PirServer, check_capacity
from .precompute import (
    BorderClosure,
    PassageSubgraph,
    PlanConstants,
    RegionSet,
    border_closure,
    cardinality_histogram,
    check_set_covering,
    check_subgraph_covering,
    compute_arcflags,
    compute_landmarks,
    compute_passage_subgraphs,
    compute_region_sets,
    hy_replace,
    index_keys,
)
from .storage import (
    Header,
    PagedFile,
    RecordFormat,
    build_combined_file,
    build_header,
    build_lookup_file,
    build_network_index_file,
    build_region_data_file,
    decode_region_group,
    key_rank,
    parse_header,
    read_index_entry,
)

SCHEMES = ("CI", "PI", "HY", "PI*", "LM", "AF")
FILE_ORDER = ("Fh", "Fl", "Fi", "Fd", "FiFd")


class BuildError(RuntimeError):
    pass


class PlanDerivationError(BuildError):
    pass


@dataclass
class BuildOptions:
    page_size: int = 4096
    cluster_pages: Optional[int] = None  # default 3 for PI*, 1 otherwise
    compression: bool = True
    hy_threshold: Optional[int] = 10  # None keeps every set; < 0 replaces every set
    anchors: int = 5
    plan_mode: str = "auto"  # exact | sampled | auto
    plan_samples: int = 10_000
    plan_seed: int = 0
    plan_safety: float = 1.25
    exact_limit: int = 10_000  # largest network allowed an exact plan
    auto_exact_limit: int = 300  # auto mode goes exact up to here
    verify_pairs: int = 0  # sampled covering check at build time
    enforce_capacity: bool = True

    def pages_per_region(self, scheme: str) -> int:
        if self.cluster_pages is not None:
            return self.cluster_pages
        return 3 if scheme == "PI*" else 1


@dataclass
class Database:
    scheme: str
    files: dict
    manifest: dict = field(default_factory=dict)
    model: CostModel = CostModel()

    @cached_property
    def header(self) -> Header:
        return parse_header(self.files["Fh"].data)

    @cached_property
    def server(self) -> PirServer:
        return PirServer(self.files, self.model)

    @property
    def plan(self) -> QueryPlan:
        return QueryPlan.of(self.header.plan)

    def file_bytes(self) -> dict:
        return {fid: f.size_bytes for fid, f in self.files.items()}

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        for fid, f in self.files.items():
            with open(os.path.join(directory, _file_name(fid)), "wb") as fh:
                fh.write(f.data)
        with open(os.path.join(directory, "manifest.txt"), "w") as fh:
            fh.write(format_manifest(self.manifest))
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(self.manifest, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory, model: CostModel = CostModel()) -> "Database":
        with open(os.path.join(directory, _file_name("Fh")), "rb") as fh:
            hdr = parse_header(fh.read())
        files = {}
        for fid in FILE_ORDER:
            path = os.path.join(directory, _file_name(fid))
            if os.path.exists(path):
                with open(path, "rb") as fh:
                    files[fid] = PagedFile(fid, hdr.page_size, fh.read())
        manifest = {}
        mpath = os.path.join(directory, "manifest.json")
        if os.path.exists(mpath):
            with open(mpath) as fh:
                manifest = json.load(fh)
        return cls(hdr.scheme, files, manifest, model)


def _file_name(fid: str) -> str:
    return f"{fid}.bin"


def format_manifest(man: dict) -> str:
    lines = []
    for k in sorted(man):
        v = man[k]
        if isinstance(v, dict):
            v = " ".join(f"{a}:{b}" for a, b in v.items())
        elif isinstance(v, list):
            v = json.dumps(v)
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Shared partition/precomputation state


@dataclass
class Precomputed:
    """Partition and border-pair closure for one (network, pages per region)."""

    tree: PackedKdTree
    cfg: PartitionConfig
    aug: object
    closure: Optional[BorderClosure] = None
    _sets: Optional[dict] = None
    _subgraphs: Optional[dict] = None

    def ensure_closure(self):
        if self.closure is None:
            self.closure = border_closure(self.aug, self.tree)
        return self.closure

    @property
    def sets(self) -> dict:
        if self._sets is None:
            self._sets = compute_region_sets(self.aug, self.tree, self.ensure_closure())
        return self._sets

    @property
    def subgraphs(self) -> dict:
        if self._subgraphs is None:
            self._subgraphs = compute_passage_subgraphs(self.aug, self.tree, self.ensure_closure())
        return self._subgraphs


def precompute(net: RoadNetwork, page_size: int = 4096, cluster_pages: int = 1,
               fmt: RecordFormat = RecordFormat()) -> Precomputed:
    cfg = PartitionConfig.for_network(net, page_size, cluster_pages, fmt.layout)
    tree = build_packed_kdtree(net, cfg, fmt.layout)
    aug, _ = extract_border_nodes(net, tree)
    return Precomputed(tree, cfg, aug)


# ---------------------------------------------------------------------------
# Builders


def build_database(net: RoadNetwork, scheme: str, options: BuildOptions = BuildOptions(),
                   model: CostModel = CostModel(), pre: Optional[Precomputed] = None) -> Database:
    """Build all files of ``scheme`` over ``net``.

    ``pre`` lets several index builds with the same pages-per-region share
    one partition and closure.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme in ("LM", "AF"):
        db = _build_search(net, scheme, options, model)
    else:
        k = options.pages_per_region(scheme)
        if pre is None:
            pre = precompute(net, options.page_size, k)
        elif pre.cfg.cluster_pages != k or pre.cfg.page_size != options.page_size:
            raise ValueError("precomputed partition does not match the requested pages per region")
        db = _build_index(net, scheme, options, model, pre)
    if options.enforce_capacity:
        for fid, f in db.files.items():
            if fid == "Fh":
                continue
            adm = check_capacity(f, model)
            if not adm:
                raise CapacityExceeded(fid, adm.reason)
    return db


def _base_manifest(net, scheme, tree, cfg, fd: PagedFile, options) -> dict:
    slack = leaf_slack(tree, cfg)
    used = sum(leaf.used_bytes for leaf in tree.leaves) + 4 * tree.num_regions
    return {
        "scheme": scheme,
        "nodes": net.num_nodes,
        "edges": net.num_edges,
        "directed": net.directed,
        "regions": tree.num_regions,
        "page_size": options.page_size,
        "cluster_pages": tree.cluster_pages,
        "max_record_bytes": cfg.max_record,
        "fd_utilization": used / max(1, fd.size_bytes),
        "fd_max_slack_except_last": max(slack[:-1], default=0),
        "packing_fallbacks": tree.fallbacks,
    }


def _finalize(scheme, net, tree, plan_rounds, consts, files, options, record=RecordFormat(),
              fixed_max=0, index_pages=0, first_pages=None) -> PagedFile:
    hdr = Header(
        scheme=scheme, directed=net.directed, page_size=options.page_size,
        cluster_pages=tree.cluster_pages, bounds=tuple(tree.bounds), root=tree.root,
        first_pages=list(first_pages if first_pages is not None else [l.first_page for l in tree.leaves]),
        plan=[list(r) for r in plan_rounds], m=consts.m, h=consts.h, r=consts.r,
        max_span=consts.max_span, fixed_max=fixed_max,
        files={fid: (f.page_count, 4 if fid == "Fl" else 0) for fid, f in files.items()},
        index_pages=index_pages, record=record,
    )
    return build_header(hdr)


def _build_index(net, scheme, options, model, pre: Precomputed) -> Database:
    tree, cfg = pre.tree, pre.cfg
    R = tree.num_regions
    keys = index_keys(R, net.directed)
    if scheme == "CI":
        payload = pre.sets
    elif scheme in ("PI", "PI*"):
        payload = pre.subgraphs
    else:
        payload = hy_replace(pre.sets, pre.subgraphs, options.hy_threshold)
    items = [(k, payload[k]) for k in keys]
    surviving = [p for _, p in items if isinstance(p, RegionSet)]
    m = max((len(p) for p in surviving), default=0)

    if options.verify_pairs:
        _verify_covering(net, pre, scheme, options)

    cap = model.max_file_bytes if options.enforce_capacity else None
    layout = build_network_index_file(items, options.page_size, R, net.directed,
                                      options.compression, m=m, max_entry_bytes=cap)
    plain_pages = layout.file.page_count
    if options.compression:
        plain_pages = build_network_index_file(items, options.page_size, R, net.directed, False, m=m).file.page_count
    fd = build_region_data_file(tree, net, options.page_size)
    spans = {k: layout.placement[k][1] for k in keys}
    sub_spans = [spans[k] for k, p in items if isinstance(p, PassageSubgraph)]
    set_spans = [spans[k] for k, p in items if isinstance(p, RegionSet)]
    h = max(sub_spans, default=0)
    max_span = max(spans.values(), default=1)
    r = max(1, max(set_spans, default=0)) if scheme == "HY" else 0
    consts = PlanConstants(m=m, h=h, r=r, max_span=max_span)
    k_pages = tree.cluster_pages

    files = {}
    targets = [layout.placement[k][0] for k in keys]
    files["Fl"] = build_lookup_file(targets, options.page_size)
    fixed_max = 0
    index_pages = 0
    first_pages = None
    if scheme == "HY":
        combined = build_combined_file(layout.file, fd)
        index_pages = layout.file.page_count
        first_pages = [index_pages + l.first_page for l in tree.leaves]
        fixed_max = _hy_fixed_max(items, layout, combined, consts.r, R, net.directed, k_pages)
        files["FiFd"] = PagedFile("FiFd", options.page_size, combined.data)
    else:
        files["Fi"] = layout.file
        files["Fd"] = fd

    plan = derive_query_plan(scheme, consts, 1, k_pages, fixed_max)
    files["Fh"] = _finalize(scheme, net, tree, plan.rounds, consts, files, options,
                            fixed_max=fixed_max, index_pages=index_pages, first_pages=first_pages)
    hdr = parse_header(files["Fh"].data)
    man = _base_manifest(net, scheme, tree, cfg, fd, options)
    man.update({
        "m": m, "h": h, "r": r, "max_span": max_span, "fixed_max": fixed_max,
        "compression": options.compression,
        "fi_pages": layout.file.page_count,
        "fi_pages_uncompressed": plain_pages,
        "fi_raw_entry_bytes": layout.raw_bytes,
        "hy_threshold": options.hy_threshold if scheme == "HY" else None,
        "replaced_keys": sum(isinstance(p, PassageSubgraph) for _, p in items),
        "set_cardinality_histogram": {str(a): b for a, b in cardinality_histogram(pre.sets.values()).items()},
        "plan": [list(map(list, r)) for r in hdr.plan],
        "pages": {fid: f.page_count for fid, f in files.items()},
        "bytes": {fid: f.size_bytes for fid, f in files.items()},
    })
    return Database(scheme, dict(sorted(files.items(), key=lambda kv: FILE_ORDER.index(kv[0]))), man, model)


def _hy_fixed_max(items, layout, combined: PagedFile, r: int, R: int, directed: bool, k: int) -> int:
    """Largest round-4 need over all keys, replaying the client's window rule."""
    n = combined.page_count
    worst = 2 * k
    for key, payload in items:
        first, span, _ = layout.placement[key]
        start = max(0, min(first, n - r))
        extra = max(0, first + span - (start + r))
        need = extra + 2 * k
        if isinstance(payload, RegionSet):
            rank = key_rank(key[0], key[1], R, directed)
            _, content = read_index_entry(combined.pages(first, span), rank)
            need += k * len(set(content) - set(key))
        worst = max(worst, need)
    return worst


def _verify_covering(net, pre: Precomputed, scheme: str, options: BuildOptions) -> None:
    rng = random.Random(options.plan_seed)
    nodes = net.node_ids()
    pairs = [(rng.choice(nodes), rng.choice(nodes)) for _ in range(options.verify_pairs)]
    if scheme in ("CI", "HY"):
        sets = {k: s.members for k, s in pre.sets.items()}
        bad = check_set_covering(net, pre.tree, sets, pairs)
        if bad:
            raise BuildError(f"region-set covering violated for {len(bad)} pairs, first {bad[0]}")
    if scheme in ("PI", "PI*", "HY"):
        subs = {k: g.edges for k, g in pre.subgraphs.items()}
        bad = check_subgraph_covering(net, pre.tree, subs, pairs)
        if bad:
            raise BuildError(f"subgraph covering violated for {len(bad)} pairs, first {bad[0]}")


# ---------------------------------------------------------------------------
# Search baselines


def _search_tree(net, scheme, options):
    k = options.pages_per_region(scheme)
    if scheme == "LM":
        fmt = RecordFormat(anchors=options.anchors, arc_region=True)
        pre = precompute(net, options.page_size, k, fmt)
        return pre, fmt
    # flag width depends on the region count, which depends on record size
    flag_bytes = 1
    for _ in range(16):
        fmt = RecordFormat(arc_region=True, flag_bytes=flag_bytes)
        pre = precompute(net, options.page_size, k, fmt)
        need = max(1, math.ceil(pre.tree.num_regions / 8))
        if need <= flag_bytes:
            return pre, fmt
        flag_bytes = need
    raise BuildError("arc-flag width did not settle")


def _build_search(net, scheme, options, model) -> Database:
    pre, fmt = _search_tree(net, scheme, options)
    tree, cfg = pre.tree, pre.cfg
    landmarks = flags = anchors = None
    if scheme == "LM":
        landmarks, anchors = compute_landmarks(net, options.anchors)
    else:
        flags = compute_arcflags(pre.aug, tree)
    fd = build_region_data_file(tree, net, options.page_size, fmt, landmarks, flags)
    rounds, info = derive_search_rounds(scheme, net, tree, fd, fmt, options)
    consts = PlanConstants()
    plan = derive_query_plan(scheme, consts, 1, tree.cluster_pages, search_rounds=rounds)
    files = {"Fd": fd}
    files["Fh"] = _finalize(scheme, net, tree, plan.rounds, consts, files, options, record=fmt)
    hdr = parse_header(files["Fh"].data)
    man = _base_manifest(net, scheme, tree, cfg, fd, options)
    man.update(info)
    man.update({
        "search_rounds": rounds,
        "anchors": anchors if anchors is not None else [],
        "flag_bytes": fmt.flag_bytes,
        "plan": [list(map(list, r)) for r in hdr.plan],
        "pages": {fid: f.page_count for fid, f in files.items()},
        "bytes": {fid: f.size_bytes for fid, f in files.items()},
    })
    files = dict(sorted(files.items(), key=lambda kv: FILE_ORDER.index(kv[0])))
    return Database(scheme, files, man, model)


def search_fetches(scheme: str, regions: list, region_of: dict, directed: bool, s: int, t: int) -> int:
    """Region rounds the client search needs for ``(s, t)`` beyond the first two regions."""
    rs, rt = region_of[s], region_of[t]
    have = {rs: regions[rs], rt: regions[rt]}

    def fetch(r):
        return regions[r]

    if scheme == "LM":
        _, n = lm_search(s, t, have, fetch, directed)
    else:
        _, n = af_search(s, t, rs, rt, have, fetch)
    return n


def derive_search_rounds(scheme: str, net: RoadNetwork, tree: PackedKdTree, fd: PagedFile,
                         fmt: RecordFormat, options: BuildOptions) -> tuple[int, dict]:
    """Number of single-region rounds to plan for, by exhaustive or sampled execution."""
    k = tree.cluster_pages
    regions = [decode_region_group(fd.pages(g * k, k), fmt) for g in range(tree.num_regions)]
    nodes = net.node_ids()
    n = len(nodes)
    mode = options.plan_mode
    if mode == "auto":
        mode = "exact" if n <= options.auto_exact_limit else "sampled"
    if mode == "exact":
        if n > options.exact_limit:
            raise PlanDerivationError(
                f"exact plan derivation runs all {n}x{n} pairs; allowed up to {options.exact_limit} "
                f"nodes, use plan_mode='sampled'")
        pairs = ((s, t) for s in nodes for t in nodes)
        count = n * n
    elif mode == "sampled":
        rng = random.Random(options.plan_seed)
        count = options.plan_samples
        pairs = ((rng.choice(nodes), rng.choice(nodes)) for _ in range(count))
    else:
        raise ValueError(f"unknown plan mode {mode!r}")
    worst = 0
    for s, t in pairs:
        worst = max(worst, search_fetches(scheme, regions, tree.region_of, net.directed, s, t))
    info = {"plan_mode": mode, "plan_pairs": count, "plan_observed_max": worst}
    if mode == "sampled":
        rounds = math.ceil(worst * options.plan_safety)
        info["plan_warning"] = (f"search rounds sampled over {count} pairs (max {worst}) and scaled by "
                                f"{options.plan_safety}; privacy relies on no query needing more than {rounds}")
    else:
        rounds = worst
    return rounds, info


# ---------------------------------------------------------------------------
# Reading the network back


def network_from_database(db: Database) -> RoadNetwork:
    """Rebuild the road network from the stored region records.

    Used as the shortest-path oracle when only the database files are at
    hand.  Edge ids are renumbered; costs and topology are unchanged.
    """
    hdr = db.header
    fid = "FiFd" if "FiFd" in db.files else "Fd"
    f = db.files[fid]
    k = hdr.cluster_pages
    coords, edges = {}, []
    for first in hdr.first_pages:
        for rec in decode_region_group(f.pages(first, k), hdr.record):
            coords[rec.node_id] = (rec.x, rec.y)
            loops = 0
            for t, w, _, _ in rec.arcs:
                if hdr.directed or rec.node_id < t:
                    edges.append((rec.node_id, t, w))
                elif rec.node_id == t:
                    # an undirected self-loop is listed twice on its node
                    loops += 1
                    if loops % 2:
                        edges.append((t, t, w))
    return RoadNetwork(coords, edges, hdr.directed, allow_zero_weights=True)
