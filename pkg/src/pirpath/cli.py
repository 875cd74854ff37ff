"""Command line entry point: ``pirpath <subcommand> ...``."""

from __future__ import annotations

import argparse
import configparser
import os
import random
import sys

from .bench import WorkloadSpec, rows_to_csv, run_workload, sweep_parameter, verify_uniform_traces
from .database import SCHEMES, BuildOptions, Database, build_database
from .engine import query
from .graph import read_network, write_network
from .pir import CapacityExceeded, CostModel, export_trace, parse_traces
from .storage import PagedFile, describe_file, parse_header
from .synth import BENCHMARK_SIZES, benchmark_like, grid_network, synthetic_road_network

COST_FLAGS = ("rtt", "bandwidth", "pir_a", "pir_b", "max_file_bytes", "scp_memory")


def _point(text: str) -> tuple[float, float]:
    try:
        x, y = text.split(",")
        return float(x), float(y)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from None


def _threshold(text: str):
    return None if text.lower() in ("none", "inf") else int(text)


def _add_cost_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("cost model")
    g.add_argument("--cost-config", help="INI file with a [cost] section")
    for name in COST_FLAGS:
        g.add_argument("--" + name.replace("_", "-"), type=float, dest=name)


def _cost_model(args) -> CostModel:
    model = CostModel.from_config(args.cost_config) if getattr(args, "cost_config", None) else CostModel()
    over = {n: getattr(args, n) for n in COST_FLAGS if getattr(args, n, None) is not None}
    return model.with_overrides(over) if over else model


def _add_build_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--coords", required=True, help="coordinate file")
    p.add_argument("--edges", required=True, help="edge file")
    p.add_argument("--page-size", type=int, default=4096)
    p.add_argument("--cluster-pages", type=int, default=None)
    p.add_argument("--no-compression", action="store_true")
    p.add_argument("--threshold", type=_threshold, default=10, help="HY set-size threshold (none = keep all)")
    p.add_argument("--anchors", type=int, default=5)
    p.add_argument("--plan-mode", choices=("auto", "exact", "sampled"), default="auto")
    p.add_argument("--plan-samples", type=int, default=10_000)
    p.add_argument("--plan-seed", type=int, default=0)


def _options(args) -> BuildOptions:
    return BuildOptions(
        page_size=args.page_size, cluster_pages=args.cluster_pages, compression=not args.no_compression,
        hy_threshold=args.threshold, anchors=args.anchors, plan_mode=args.plan_mode,
        plan_samples=args.plan_samples, plan_seed=args.plan_seed,
    )


def cmd_synth(args) -> int:
    if args.grid:
        rows, cols = (int(v) for v in args.grid.lower().split("x"))
        net = grid_network(rows, cols)
    elif args.like:
        net = benchmark_like(args.like, args.seed)
    else:
        net = synthetic_road_network(args.nodes, args.edge_count, seed=args.seed)
    write_network(net, args.out + ".coords", args.out + ".edges")
    print(f"wrote {net.num_nodes} nodes, {net.num_edges} edges to {args.out}.coords / {args.out}.edges")
    return 0


def cmd_build(args) -> int:
    net = read_network(args.coords, args.edges)
    model = _cost_model(args)
    try:
        db = build_database(net, args.scheme, _options(args), model)
    except CapacityExceeded as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return 2
    db.save(args.out)
    m = db.manifest
    print(f"{args.scheme}: {m['regions']} regions, files " +
          ", ".join(f"{fid}={p} pages" for fid, p in m["pages"].items()))
    if m.get("plan_warning"):
        print("warning: " + m["plan_warning"], file=sys.stderr)
    return 0


def cmd_query(args) -> int:
    db = Database.load(args.db, _cost_model(args))
    if args.scheme and args.scheme != db.scheme:
        print(f"database holds a {db.scheme} build, not {args.scheme}", file=sys.stderr)
        return 2
    rng = random.Random(args.seed) if args.seed is not None else None
    res = query(db, args.source, args.target, rng=rng)
    if res.path is None:
        print(f"no path from {res.source} to {res.target}")
    else:
        print("path " + " ".join(map(str, res.path.nodes)))
        print(f"cost {res.cost!r}")
    if any(res.snapped):
        print(f"snapped endpoints to nodes {res.source}, {res.target}")
    t = res.timing
    print(f"pir {t.pir_time:.6f} s  comm {t.comm_time:.6f} s  client {t.client_time:.6f} s  total {t.total:.6f} s")
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(export_trace(res.trace, db.model))
    return 0


def cmd_bench(args) -> int:
    db = Database.load(args.db, _cost_model(args))
    spec = WorkloadSpec(args.pairs, args.seed, "exhaustive" if args.exhaustive else "uniform")
    rep = run_workload(db, spec, measure_client=args.measure_client, label=args.label)
    text = rep.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.traces:
        with open(args.traces, "w") as fh:
            for tr in rep.traces:
                fh.write(export_trace(tr, db.model))
    print(f"{db.scheme}: {len(rep.traces)} queries, traces uniform", file=sys.stderr)
    return 0


def cmd_audit(args) -> int:
    traces = []
    for path in args.traces:
        with open(path) as fh:
            traces.extend(parse_traces(fh.read()))
    check = verify_uniform_traces(traces)
    if check and args.db:
        plan = Database.load(args.db).plan.as_lists()
        ref = tuple(tuple(tuple(seg) for seg in r) for r in plan)
        if traces and traces[0].view() != ref:
            print(f"FAIL {len(traces)} traces: trace 0 deviates from the stored plan")
            return 1
    if check:
        print(f"PASS {len(traces)} traces identical")
        return 0
    print(f"FAIL {check.diff}")
    return 1


def _grid_values(raw: str, param: str) -> list:
    out = []
    for tok in raw.replace(",", " ").split():
        if param == "hy_threshold":
            out.append(_threshold(tok))
        else:
            out.append(int(tok))
    return out


SWEEP_PARAMS = {"hy_threshold", "cluster_pages", "anchors", "page_size"}


def cmd_sweep(args) -> int:
    cp = configparser.ConfigParser()
    with open(args.grid) as fh:
        cp.read_file(fh)
    sec = cp["sweep"]
    scheme, param = sec["scheme"], sec["param"]
    if scheme not in SCHEMES:
        raise SystemExit(f"unknown scheme {scheme!r}")
    if param not in SWEEP_PARAMS:
        raise SystemExit(f"cannot sweep {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    values = _grid_values(sec["values"], param)
    base = {k: v for k, v in sec.items() if k not in ("scheme", "param", "values")}
    net = read_network(args.coords, args.edges)
    model = _cost_model(args)

    def build(value):
        opts = BuildOptions(**{**{k: _coerce(k, v) for k, v in base.items()}, param: value})
        return build_database(net, scheme, opts, model)

    spec = WorkloadSpec(args.pairs, args.seed)
    rows = sweep_parameter(build, values, spec, net, param=param, scheme=scheme,
                           measure_client=args.measure_client, label=args.label)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _coerce(key: str, raw: str):
    default = getattr(BuildOptions(), key, None)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, float):
        return float(raw)
    if key == "hy_threshold":
        return _threshold(raw)
    if isinstance(default, int) or default is None:
        return int(raw)
    return raw


def cmd_describe(args) -> int:
    header = None
    if args.header:
        with open(args.header, "rb") as fh:
            header = parse_header(fh.read())
    fid = args.file_id or os.path.splitext(os.path.basename(args.path))[0]
    if header is None and fid != "Fh":
        hpath = os.path.join(os.path.dirname(args.path) or ".", "Fh.bin")
        if os.path.exists(hpath):
            with open(hpath, "rb") as fh:
                header = parse_header(fh.read())
    page = header.page_size if header is not None else args.page_size
    with open(args.path, "rb") as fh:
        data = fh.read()
    if fid == "Fh":
        page = parse_header(data).page_size
    print(describe_file(PagedFile(fid, page, data), header, args.limit))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pirpath", description="Private shortest paths over simulated PIR")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic network")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--grid", help="RxC lattice, e.g. 4x4")
    p.add_argument("--like", choices=sorted(BENCHMARK_SIZES))
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--edge-count", type=int, default=1150)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build a scheme's database files")
    _add_build_args(p)
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--out", required=True, help="output directory")
    _add_cost_args(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer one shortest-path query")
    p.add_argument("--db", required=True)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--source", required=True, type=_point)
    p.add_argument("--target", required=True, type=_point)
    p.add_argument("--trace", help="write the access trace here")
    p.add_argument("--seed", type=int, default=None, help="seed for dummy page choice")
    _add_cost_args(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="run a checked workload and write a CSV report")
    p.add_argument("--db", required=True)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--exhaustive", action="store_true", help="all node pairs instead of sampled ones")
    p.add_argument("--traces", help="also write every access trace here")
    p.add_argument("--measure-client", action="store_true", help="record wall-clock client time")
    p.add_argument("--label", default="")
    _add_cost_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="check stored traces are identical")
    p.add_argument("traces", nargs="+")
    p.add_argument("--db", help="also compare against this database's plan")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="sweep one build parameter over a grid file")
    p.add_argument("--grid", required=True, help="INI file with a [sweep] section")
    p.add_argument("--coords", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--measure-client", action="store_true")
    p.add_argument("--label", default="")
    _add_cost_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("describe", help="dump a database file's structure")
    p.add_argument("path")
    p.add_argument("--file-id", choices=("Fh", "Fl", "Fi", "Fd", "FiFd"))
    p.add_argument("--header", help="header file (default: Fh.bin beside the file)")
    p.add_argument("--page-size", type=int, default=4096)
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(func=cmd_describe)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
