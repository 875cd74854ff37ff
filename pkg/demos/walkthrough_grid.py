"""
Private shortest paths on a 4x4 grid
====================================

Builds every scheme over a small lattice, answers one query with each,
and shows that the server sees the same access pattern whatever the
endpoints are.
"""

import random

from pirpath import BuildOptions, build_database, query
from pirpath.synth import grid_network

# sixteen nodes on integer coordinates, unit-weight edges
net = grid_network(4, 4)
print(f"{net.num_nodes} nodes, {net.num_edges} edges")

# 256-byte pages hold four node records, so the grid splits into several regions
opts = BuildOptions(page_size=256)
dbs = {s: build_database(net, s, opts) for s in ("CI", "PI", "PI*", "HY", "LM", "AF")}

for scheme, db in dbs.items():
    hdr = db.header
    plan = " | ".join(", ".join(f"{f}x{c}" for f, c in rnd) for rnd in hdr.plan)
    print(f"{scheme:4s} regions={hdr.num_regions:2d} plan: {plan}")

# %%
# One query per scheme.  Points need not sit on nodes; they snap to the
# nearest node of their region.
src, dst = (0.1, 0.2), (2.9, 2.9)
for scheme, db in dbs.items():
    res = query(db, src, dst, rng=random.Random(1), measure=False)
    t = res.timing
    print(f"{scheme:4s} cost={res.cost:.1f} path={list(res.path.nodes)} "
          f"pir={t.pir_time:.3f}s comm={t.comm_time:.3f}s")

# %%
# The adversary view is the list of rounds with file ids and page counts.
# It does not depend on the query.
db = dbs["HY"]
views = set()
rng = random.Random(7)
ids = net.node_ids()
for _ in range(50):
    s, t = rng.choice(ids), rng.choice(ids)
    views.add(query(db, net.coords[s], net.coords[t], rng=rng, measure=False).trace.view())
print(f"HY: 50 random queries, {len(views)} distinct trace(s)")
print(next(iter(views)))
