"""
Space against time on an Oldenburg-sized network
================================================

Sweeps the hybrid scheme's set-size threshold and the clustered passage
index's pages per region, printing file sizes and simulated response
times.  Takes a couple of minutes, most of it in the shared precompute.
"""

from pirpath import BuildOptions, WorkloadSpec, build_database, precompute, run_workload
from pirpath.synth import benchmark_like

net = benchmark_like("oldenburg")
print(f"synthetic network: {net.num_nodes} nodes, {net.num_edges} edges")

# the partition and all border-pair searches are shared by CI, PI and HY
pre = precompute(net)
pre.ensure_closure()
spec = WorkloadSpec(pair_count=100, seed=3)


def show(label, db):
    row = run_workload(db, spec, net).rows[0]
    mb = row["total_bytes"] / 2**20
    print(f"{label:12s} {mb:8.2f} MB  {row['pir_accesses']:3d} PIR pages  {row['total_time']:7.2f} s")


for scheme in ("CI", "PI"):
    show(scheme, build_database(net, scheme, BuildOptions(), pre=pre))

# %%
# Lower thresholds swap more region sets for passage subgraphs: fewer
# pages per query, a bigger combined file.  Each page of a bigger file
# costs more to retrieve privately, so time is not monotone at the top.
for th in (None, 40, 20, 10, 5, 0):
    show(f"HY t={th}", build_database(net, "HY", BuildOptions(hy_threshold=th), pre=pre))

# %%
# More pages per region mean fewer regions and a much smaller index.
for k in (1, 2, 3, 4):
    show(f"PI* k={k}", build_database(net, "PI*", BuildOptions(cluster_pages=k)))
