"""
Working under a PIR file-size cap
=================================

The PIR interface only admits files up to a maximum size.  With the cap
lowered to 10 MB, the plain passage index no longer fits on an
Oldenburg-sized network, while the clustered variant does.
"""

from pirpath import BuildOptions, CapacityExceeded, CostModel, build_database
from pirpath.synth import benchmark_like

net = benchmark_like("oldenburg")
model = CostModel(max_file_bytes=10 * 2**20)

for scheme, opts in (("PI", BuildOptions()), ("HY", BuildOptions(hy_threshold=20)),
                     ("PI*", BuildOptions(cluster_pages=2)), ("PI*", BuildOptions(cluster_pages=3))):
    label = scheme if scheme != "PI*" else f"PI* k={opts.cluster_pages}"
    try:
        db = build_database(net, scheme, opts, model=model)
    except CapacityExceeded as exc:
        print(f"{label:9s} rejected: {exc}")
        continue
    sizes = ", ".join(f"{f} {b / 2**20:.2f} MB" for f, b in db.file_bytes().items())
    print(f"{label:9s} accepted: {sizes}")
