"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal
summary.  The Oldenburg-scale network is the synthetic stand-in produced
by ``benchmark_like("oldenburg")`` (6,105 nodes).
"""

import math
import random

import networkx as nx
import pytest

from pirpath.bench import WorkloadSpec, run_workload, verify_uniform_traces
from pirpath.database import BuildOptions, build_database
from pirpath.engine import query
from pirpath.partition import GROUP_HEADER, PartitionConfig, build_packed_kdtree, leaf_slack
from pirpath.pir import GB, CapacityExceeded, CostModel
from pirpath.precompute import index_keys
from pirpath.storage import build_region_data_file, entry_span, key_rank, lookup_position, read_index_entry, read_lookup
from pirpath.synth import benchmark_like, grid_network

from conftest import SMALL_PAGE, halves_precomputed, nx_costs, record, to_nx

pytestmark = pytest.mark.slow

PAIRS = 1000
SEED = 2026
REL_TOL = 1e-9


def same_cost(a, b):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return math.isclose(a, b, rel_tol=REL_TOL)


@pytest.fixture(scope="module")
def t16_builds():
    net = grid_network(4, 4)
    opts = dict(page_size=SMALL_PAGE)
    builds = {s: build_database(net, s, BuildOptions(**opts)) for s in ("CI", "PI", "PI*", "LM", "AF")}
    builds["HY/1"] = build_database(net, "HY", BuildOptions(hy_threshold=1, **opts))
    builds["HY/0"] = build_database(net, "HY", BuildOptions(hy_threshold=0, **opts))
    return net, builds


@pytest.fixture(scope="module")
def t16_runs(t16_builds):
    net, builds = t16_builds
    ids = net.node_ids()
    out = {}
    for name, db in builds.items():
        out[name] = [query(db, net.coords[s], net.coords[t], rng=random.Random(n), measure=False)
                     for n, (s, t) in enumerate((s, t) for s in ids for t in ids)]
    return out


@pytest.fixture(scope="module")
def workload(oldenburg):
    pairs = WorkloadSpec(PAIRS, SEED).pairs(oldenburg)
    g = to_nx(oldenburg)
    want = {}
    for s in sorted({s for s, _ in pairs}):
        dist = nx.single_source_dijkstra_path_length(g, s, weight="weight")
        for s2, t in pairs:
            if s2 == s:
                want[(s, t)] = dist.get(t, math.inf)
    return pairs, want


@pytest.fixture(scope="module")
def oldenburg_runs(oldenburg, oldenburg_dbs, workload):
    pairs, _ = workload
    out = {}
    for scheme, db in oldenburg_dbs.items():
        out[scheme] = [query(db, oldenburg.coords[s], oldenburg.coords[t], rng=random.Random(n), measure=False)
                       for n, (s, t) in enumerate(pairs)]
    return out


def test_criterion_1_oracle_equivalence(t16_builds, t16_runs, workload, oldenburg_runs):
    net, _ = t16_builds
    want = nx_costs(net)
    bad = []
    for name, results in t16_runs.items():
        for res in results:
            if not same_cost(res.cost, want[res.source][res.target]):
                bad.append((name, res.source, res.target))
    pairs, costs = workload
    for scheme, results in oldenburg_runs.items():
        for (s, t), res in zip(pairs, results):
            if (res.source, res.target) != (s, t) or not same_cost(res.cost, costs[(s, t)]):
                bad.append((scheme, s, t))
    checked = sum(map(len, t16_runs.values())) + sum(map(len, oldenburg_runs.values()))
    detail = f"{checked} queries over {len(t16_runs)} T16 and {len(oldenburg_runs)} Oldenburg builds"
    assert record(1, not bad, detail + (f"; first mismatch {bad[0]}" if bad else "")), bad[:5]


def test_criterion_2_trace_indistinguishability(t16_runs, oldenburg_runs):
    failures = []
    for label, runs in (("T16", t16_runs), ("Oldenburg", oldenburg_runs)):
        for name, results in runs.items():
            check = verify_uniform_traces([r.trace for r in results])
            if not check:
                failures.append(f"{label} {name}: {check.diff}")
    n = len(t16_runs) + len(oldenburg_runs)
    assert record(2, not failures, f"{n} builds, >= 256 traces each" + (f"; {failures[0]}" if failures else "")), failures


def test_criterion_3_plan_constants(oldenburg_dbs, oldenburg_runs):
    net = grid_network(4, 4)
    pi = build_database(net, "PI", BuildOptions(page_size=512), pre=halves_precomputed(net, 512))
    ids = net.node_ids()
    pi_counts = {query(pi, net.coords[s], net.coords[t], measure=False).trace.pir_pages for s in ids for t in ids}
    m = oldenburg_dbs["CI"].header.m
    ci_fd = {r.trace.pages_per_file()["Fd"] for r in oldenburg_runs["CI"]}
    star = oldenburg_dbs["PI*"]
    star_fd = {r.trace.pages_per_file()["Fd"] for r in oldenburg_runs["PI*"]}
    ok = (pi.header.h == 1 and pi_counts == {4} and ci_fd == {m + 2}
          and star.header.cluster_pages == 3 and star_fd == {6})
    detail = f"PI h={pi.header.h} pages {sorted(pi_counts)}; CI m={m} F_d {sorted(ci_fd)}; PI* F_d {sorted(star_fd)}"
    assert record(3, ok, detail)


def test_criterion_4_packing_guarantee(oldenburg_dbs):
    notes, ok = [], True
    for name in ("oldenburg", "germany", "argentina"):
        net = benchmark_like(name)
        for k in (1, 3):
            cfg = PartitionConfig.for_network(net, 4096, k)
            tree = build_packed_kdtree(net, cfg)
            fd = build_region_data_file(tree, net, 4096)
            slack = max(leaf_slack(tree, cfg)[:-1], default=0)
            used = sum(l.used_bytes for l in tree.leaves) + GROUP_HEADER * tree.num_regions
            util = used / fd.size_bytes
            ok &= slack <= cfg.max_record and util >= 0.95 and tree.fallbacks == 0
            notes.append(f"{name}/k{k} slack {slack}<=z={cfg.max_record} util {util:.3f}")
    for scheme, db in oldenburg_dbs.items():
        ok &= db.manifest["fd_max_slack_except_last"] <= db.manifest["max_record_bytes"]
        ok &= db.manifest["fd_utilization"] >= 0.95
    assert record(4, ok, "; ".join(notes))


def decode_entry(db, i, j):
    hdr = db.header
    B = hdr.page_size
    rank = key_rank(i, j, hdr.num_regions, hdr.directed)
    page, off = lookup_position(rank, B)
    target = read_lookup(db.files["Fl"].page(page), off)
    fi = db.files["Fi"]
    span = entry_span(fi.page(target), rank, B)
    return read_index_entry(fi.pages(target, span), rank)


def test_criterion_5_compression(oldenburg_dbs, oldenburg_pre):
    ci, pi = oldenburg_dbs["CI"], oldenburg_dbs["PI"]
    m = ci.header.m
    bad = []
    for key in index_keys(ci.header.num_regions, False):
        kind, content = decode_entry(ci, *key)
        if kind != "set" or not set(oldenburg_pre.sets[key].members) <= content or len(content) > m:
            bad.append(("CI", key))
        kind, content = decode_entry(pi, *key)
        if kind != "subgraph" or not set(oldenburg_pre.subgraphs[key].edges) <= content:
            bad.append(("PI", key))
    smaller = {s: (db.manifest["fi_pages"], db.manifest["fi_pages_uncompressed"])
               for s, db in oldenburg_dbs.items() if "fi_pages" in db.manifest}
    ok = not bad and all(a <= b for a, b in smaller.values())
    detail = f"{len(index_keys(ci.header.num_regions, False))} keys; F_i pages compressed/plain {smaller}"
    assert record(5, ok, detail + (f"; first bad {bad[0]}" if bad else ""))


def test_criterion_6_hybrid_leakage(oldenburg_dbs, oldenburg_runs, t16_runs):
    groups = {}
    for runs in (oldenburg_runs["HY"], t16_runs["HY/1"]):
        views = {}
        for r in runs:
            views.setdefault(r.answered_by, set()).add(r.trace.view())
        groups[len(groups)] = views
    ok = all(set(v) == {"set", "subgraph"} and len(v["set"] | v["subgraph"]) == 1 for v in groups.values())
    hy = oldenburg_dbs["HY"].manifest
    detail = (f"Oldenburg HY threshold {hy['hy_threshold']} replaced {hy['replaced_keys']} keys; "
              f"answered by {sorted(groups[0])}, distinct views {[len(set().union(*v.values())) for v in groups.values()]}")
    assert record(6, ok, detail)


def mean_total(results):
    return sum(r.timing.total for r in results) / len(results)


def sweep_point(db, net, pairs):
    """(mean response, index bytes, fetches from the region-carrying file) of one sweep build."""
    results = [query(db, net.coords[s], net.coords[t], rng=random.Random(n), measure=False)
               for n, (s, t) in enumerate(pairs)]
    assert verify_uniform_traces([r.trace for r in results])
    index_bytes = db.manifest["fi_pages"] * db.header.page_size
    fetches = db.plan.count("FiFd") if "FiFd" in db.files else db.plan.count("Fd")
    return mean_total(results), index_bytes, fetches


def non_increasing(xs):
    return all(b <= a for a, b in zip(xs, xs[1:]))


HY_GRID = [None, 40, 20, 10, 5, 2, 0]
STAR_GRID = [1, 2, 3, 4, 5]


@pytest.fixture(scope="module")
def sweeps(oldenburg, oldenburg_pre, workload):
    pairs = workload[0][:100]
    hy = [sweep_point(build_database(oldenburg, "HY", BuildOptions(hy_threshold=th), pre=oldenburg_pre),
                      oldenburg, pairs) for th in HY_GRID]
    star = [sweep_point(build_database(oldenburg, "PI*", BuildOptions(cluster_pages=k)), oldenburg, pairs)
            for k in STAR_GRID]
    return hy, star


def test_criterion_7_trends(oldenburg_runs, sweeps):
    means = {s: mean_total(r) for s, r in oldenburg_runs.items()}
    ordering = means["PI"] < means["CI"] < min(means["LM"], means["AF"])
    hy, star = sweeps
    # threshold falling: fewer combined-file fetches, more index bytes;
    # clusters growing: fewer index bytes
    hy_ok = non_increasing([f for _, _, f in hy]) and non_increasing([-b for _, b, _ in hy])
    star_ok = non_increasing([b for _, b, _ in star])
    order_txt = " < ".join(f"{s} {means[s]:.2f}" for s in sorted(means, key=means.get))
    detail = (f"mean s: {order_txt}; HY fetches {[f for _, _, f in hy]} index MB "
              f"{[round(b / 2**20, 1) for _, b, _ in hy]} over {HY_GRID}; "
              f"PI* index MB {[round(b / 2**20, 1) for _, b, _ in star]} over {STAR_GRID}")
    assert record(7, ordering and hy_ok and star_ok, detail)


def test_response_time_along_sweeps(sweeps):
    # Not an acceptance gate: the sweep directions above are stated in plan
    # retrievals and index size.  Response time is checked here and reported.
    hy, star = sweeps
    hy_t = [round(t, 2) for t, _, _ in hy]
    star_t = [round(t, 2) for t, _, _ in star]
    if non_increasing(hy_t) and non_increasing([-t for t in star_t]):
        return
    pytest.xfail(f"response time not monotone under the default cost model: HY {hy_t} over {HY_GRID}, "
                 f"PI* {star_t} over {STAR_GRID}")


def test_criterion_8_cost_calibration():
    t = CostModel().page_time(GB // 4096)  # 4 KB pages
    assert record(8, abs(t - 1.0) <= 0.1, f"per-page time on a 1 GByte file {t:.6f} s")


def test_criterion_9_capacity(oldenburg, oldenburg_pre, workload):
    cap = 10 * 2**20
    model = CostModel(max_file_bytes=cap)
    with pytest.raises(CapacityExceeded) as exc:
        build_database(oldenburg, "PI", BuildOptions(), model=model, pre=oldenburg_pre)
    named = exc.value.file_id == "Fi" and "cap" in str(exc.value)
    fits = {}
    for label, scheme, opts in (("HY", "HY", BuildOptions()), ("PI*", "PI*", BuildOptions(cluster_pages=3))):
        try:
            db = build_database(oldenburg, scheme, opts, model=model,
                                pre=oldenburg_pre if scheme == "HY" else None)
        except CapacityExceeded:
            continue
        fits[label] = max(db.file_bytes().values())
        rep = run_workload(db, WorkloadSpec(100, SEED), oldenburg, oracle=workload[1])
        assert rep.check
    ok = named and bool(fits) and all(b <= cap for b in fits.values())
    assert record(9, ok, f"PI rejected: {exc.value}; within {cap} B: {fits}")


def test_criterion_10_determinism(oldenburg, oldenburg_dbs):
    differ = []
    for scheme, db in oldenburg_dbs.items():
        again = build_database(oldenburg, scheme, BuildOptions())
        if {f: x.data for f, x in again.files.items()} != {f: x.data for f, x in db.files.items()}:
            differ.append(scheme)
    spec = WorkloadSpec(200, SEED)
    csv_same = all(run_workload(oldenburg_dbs[s], spec, oldenburg).to_csv()
                   == run_workload(oldenburg_dbs[s], spec, oldenburg).to_csv() for s in ("HY", "LM"))
    ok = not differ and csv_same
    assert record(10, ok, f"{len(oldenburg_dbs)} schemes rebuilt byte-identical {not differ}; seeded CSV identical {csv_same}")
